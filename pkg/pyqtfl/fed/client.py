"""
Federated Client: Local Training on a Private Shard
"""
from typing import NamedTuple, Optional

import numpy as np
from pyderive import dataclass

from ..cnn import evaluate
from ..data import Dataset
from ..exceptions import ConfigError, InvariantError
from ..train import DEFAULT_BATCH, AdamState, Engine, epoch_rng, run_epoch

#** Variables **#
__all__ = ['ClientUpdate', 'Client', 'local_train']

#** Classes **#

class ClientUpdate(NamedTuple):
    """
    Trained Vector and Local Metrics Sent Back by One Client
    """
    client:     int
    vector:     np.ndarray
    n_samples:  int
    train_loss: float
    local_acc:  float
    local_loss: float

@dataclass(slots=True)
class Client:
    """
    Stateful Federated Participant (owns its shard and optimizer moments)
    """
    id:    int
    shard: Dataset
    opt:   AdamState

    def local_train(self,
        engine:       Engine,
        vector:       np.ndarray,
        local_epochs: int,
        seed:         int,
        round:        int,
        batch_size:   int = DEFAULT_BATCH,
    ) -> ClientUpdate:
        """
        train on the private shard starting from the broadcast vector

        :param engine:       trainable parameterization
        :param vector:       broadcast global vector
        :param local_epochs: passes over the shard this round
        :param seed:         experiment seed
        :param round:        zero-based round index
        :param batch_size:   minibatch size
        :return:             client update
        """
        return local_train(
            engine=engine,
            vector=vector,
            shard=self.shard,
            local_epochs=local_epochs,
            seed=seed,
            client=self.id,
            round=round,
            batch_size=batch_size,
            opt=self.opt,
        )

#** Functions **#

def local_train(
    engine:       Engine,
    vector:       np.ndarray,
    shard:        Dataset,
    local_epochs: int,
    seed:         int,
    client:       int = 0,
    round:        int = 0,
    batch_size:   int = DEFAULT_BATCH,
    opt:          Optional[AdamState] = None,
) -> ClientUpdate:
    """
    copy the global vector and run `local_epochs` passes over the shard

    :param engine:       trainable parameterization
    :param vector:       broadcast global vector
    :param shard:        client's private data
    :param local_epochs: passes over the shard this round
    :param seed:         experiment seed
    :param client:       client id (selects the shuffling stream)
    :param round:        zero-based round index
    :param batch_size:   minibatch size
    :param opt:          client optimizer state (fresh when omitted)
    :return:             client update
    """
    if len(shard) == 0:
        raise ConfigError(f'client {client} has an empty shard')
    vector = np.array(vector, dtype=np.float64)
    if vector.shape != (engine.n_params, ):
        raise InvariantError(
            f'client {client} got vector of {vector.size} '
            f'for {engine.mode} mode ({engine.n_params})')
    opt    = opt or AdamState(engine.n_params)
    losses = []
    for epoch in range(local_epochs):
        rng          = epoch_rng(seed, client, round * local_epochs + epoch)
        vector, loss = run_epoch(engine, vector, opt, shard, batch_size, rng)
        losses.append(loss)
        engine.logger.debug(
            f'client={client} | round={round + 1} epoch={epoch + 1} '
            f'loss={loss:.4f}')
    local = evaluate(engine.materialize(vector), shard)
    return ClientUpdate(
        client=client,
        vector=vector,
        n_samples=len(shard),
        train_loss=losses[-1] if losses else local.loss,
        local_acc=local.accuracy,
        local_loss=local.loss,
    )

