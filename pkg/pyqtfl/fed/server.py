"""
Federated Orchestration: Sharding, FedAvg Aggregation and the Round Loop
"""
from concurrent.futures import ThreadPoolExecutor
from logging import Logger, getLogger
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from pyderive import dataclass, field

from ..cnn import Evaluation, evaluate
from ..data import Dataset
from ..exceptions import ConfigError, InvariantError
from ..train import DEFAULT_BATCH, DEFAULT_LR, AdamState, Engine
from .client import Client, ClientUpdate

#** Variables **#
__all__ = [
    'BYTES_PER_PARAM',

    'FedConfig',
    'RoundMetrics',
    'FederatedServer',

    'partition',
    'aggregation_weights',
    'aggregate',
    'run_federated',
]

#: wire size of one float64 parameter
BYTES_PER_PARAM = 8

#** Functions **#

def partition(dataset: Dataset, n_clients: int, seed: int) -> List[Dataset]:
    """
    seeded IID split into near-equal disjoint shards

    shard membership comes from a seeded shuffle while each shard keeps the
    original dataset order, so a single shard reproduces the dataset.

    :param dataset:   full training data
    :param n_clients: number of shards
    :param seed:      random seed
    :return:          list of shards (sizes differ by at most one)
    """
    if n_clients < 1:
        raise ConfigError(f'n_clients must be positive: {n_clients}')
    if n_clients > len(dataset):
        raise ConfigError(
            f'n_clients={n_clients} exceeds dataset size {len(dataset)}')
    order = np.random.default_rng(seed).permutation(len(dataset))
    return [dataset.take(np.sort(part))
        for part in np.array_split(order, n_clients)]

def aggregation_weights(updates: Sequence[ClientUpdate]) -> np.ndarray:
    """
    FedAvg weights n_k / sum(n) in ascending client-id order
    """
    counts = np.array([u.n_samples for u in updates], dtype=np.float64)
    if np.any(counts <= 0):
        raise InvariantError('client updates must carry positive sample counts')
    return counts / counts.sum()

def aggregate(updates: Sequence[ClientUpdate]) -> np.ndarray:
    """
    sample-count weighted coordinate-wise mean of client vectors

    :param updates: client updates (any order)
    :return:        new global vector
    """
    if not updates:
        raise InvariantError('cannot aggregate zero client updates')
    ordered = sorted(updates, key=lambda u: u.client)
    sizes   = {u.vector.shape for u in ordered}
    if len(sizes) != 1:
        raise InvariantError(f'client vector shapes disagree: {sizes}')
    weights = aggregation_weights(ordered)
    base    = ordered[0].vector
    result  = base.astype(np.float64, copy=True)
    for weight, update in zip(weights, ordered):
        result += weight * (update.vector - base)
    # rounding may step an ulp past the client extremes
    stack = np.stack([u.vector for u in ordered])
    return np.clip(result, stack.min(axis=0), stack.max(axis=0))

#** Classes **#

@dataclass(slots=True)
class FedConfig:
    """
    Federated Experiment Grid Point (rounds r, local epochs e, clients c)
    """
    n_clients:    int
    rounds:       int
    local_epochs: int
    batch_size:   int   = DEFAULT_BATCH
    lr:           float = DEFAULT_LR
    seed:         int   = 0
    mode:         str   = 'qt'
    workers:      int   = 1

    def __post_init__(self):
        if self.n_clients < 1:
            raise ConfigError(f'n_clients must be positive: {self.n_clients}')
        if self.rounds < 0 or self.local_epochs < 0:
            raise ConfigError('rounds and local_epochs must be non-negative')
        if self.batch_size < 1 or self.workers < 1:
            raise ConfigError('batch_size and workers must be positive')
        if self.mode not in ('qt', 'classical'):
            raise ConfigError(f'unknown federated mode: {self.mode!r}')

    @property
    def label(self) -> str:
        return f'r{self.rounds}-e{self.local_epochs}-c{self.n_clients}'

class RoundMetrics(NamedTuple):
    """
    Global and Per-Client Results of One Communication Round
    """
    round:               int
    global_accuracy:     float
    global_loss:         float
    client_accuracies:   Tuple[float, ...]
    client_losses:       Tuple[float, ...]
    client_train_losses: Tuple[float, ...]
    """final-epoch training loss reported by each client"""
    n_params:            int
    update_bytes:        int

@dataclass(slots=True)
class FederatedServer:
    """
    In-Process FedAvg Orchestrator and Sole Owner of the Global Vector
    """
    config:  FedConfig
    engine:  Engine
    train:   Dataset
    test:    Dataset
    logger:  Logger = field(default_factory=lambda: getLogger('pyqtfl'))

    clients:       List[Client]        = field(init=False, default_factory=list)
    global_vector: np.ndarray          = field(init=False)
    history:       List[RoundMetrics]  = field(init=False, default_factory=list)
    final:         Optional[Evaluation] = field(init=False, default=None)

    def __post_init__(self):
        self.logger = self.logger.getChild('fed')
        if self.engine.mode != self.config.mode:
            raise ConfigError(
                f'engine mode {self.engine.mode!r} != {self.config.mode!r}')
        shards = partition(self.train, self.config.n_clients, self.config.seed)
        for n, shard in enumerate(shards):
            opt = AdamState(self.engine.n_params, lr=self.config.lr)
            self.clients.append(Client(n, shard, opt))
        rng = np.random.default_rng(self.config.seed)
        self.global_vector = self.engine.initial_vector(rng)

    @property
    def update_bytes(self) -> int:
        """
        bytes each client sends per round
        """
        return self.engine.n_params * BYTES_PER_PARAM

    def evaluate_global(self) -> Evaluation:
        """
        classical-only evaluation of the current global model on the test set
        """
        model = self.engine.materialize(self.global_vector)
        return evaluate(model, self.test)

    def _dispatch(self, round: int) -> List[ClientUpdate]:
        config = self.config
        def train(client: Client) -> ClientUpdate:
            return client.local_train(
                engine=self.engine,
                vector=self.global_vector.copy(),
                local_epochs=config.local_epochs,
                seed=config.seed,
                round=round,
                batch_size=config.batch_size,
            )
        if config.workers <= 1:
            return [train(client) for client in self.clients]
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            return list(pool.map(train, self.clients))

    def _record(self, round: int,
        result: Evaluation, updates: Sequence[ClientUpdate]) -> RoundMetrics:
        metrics = RoundMetrics(
            round=round,
            global_accuracy=result.accuracy,
            global_loss=result.loss,
            client_accuracies=tuple(u.local_acc for u in updates),
            client_losses=tuple(u.local_loss for u in updates),
            client_train_losses=tuple(u.train_loss for u in updates),
            n_params=self.engine.n_params,
            update_bytes=self.update_bytes if updates else 0,
        )
        self.history.append(metrics)
        self.final = result
        return metrics

    def run_round(self, round: int) -> RoundMetrics:
        """
        broadcast, local training on every client, aggregation, evaluation

        :param round: zero-based round index
        :return:      metrics of the aggregated global model
        """
        updates = self._dispatch(round)
        self.global_vector = aggregate(updates)
        result  = self.evaluate_global()
        metrics = self._record(round + 1, result, updates)
        ratio   = self.engine.n_params / self.engine.skeleton.parameter_count
        local   = float(np.mean(metrics.client_train_losses))
        self.logger.info(
            f'{self.config.label} | round={round + 1} train_loss={local:.4f} '
            f'acc={result.accuracy:.4f} loss={result.loss:.4f} '
            f'update_bytes={self.update_bytes} ratio={ratio:.4f}')
        return metrics

    def run(self) -> List[RoundMetrics]:
        """
        evaluate the initial global model then execute every round

        :return: metrics for round 0 (initial model) through round r
        """
        self.history.clear()
        self._record(0, self.evaluate_global(), [])
        for round in range(self.config.rounds):
            self.run_round(round)
        return list(self.history)

def run_federated(config: FedConfig,
    train: Dataset, test: Dataset, engine: Engine) -> List[RoundMetrics]:
    """
    run a complete federated experiment

    :param config: grid point and training settings
    :param train:  training data (sharded across clients)
    :param test:   held-out test data
    :param engine: trainable parameterization shared by all clients
    :return:       per-round metrics including the initial model (round 0)
    """
    return FederatedServer(config, engine, train, test).run()
