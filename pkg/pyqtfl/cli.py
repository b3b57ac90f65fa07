"""
Experiment Harness: Config Resolution, Pipelines and Result Artifacts
"""
import csv
import json
import os
import time
from argparse import SUPPRESS, ArgumentParser
from logging import basicConfig, getLogger
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple
from typing_extensions import Annotated

import numpy as np
from pyderive.extensions.validate import BaseModel, PreValidator, Validator

from .cnn import (
    REFERENCE_PARAMS, ClassicalModel, Evaluation, build_reference_model,
    evaluate, flatten)
from .data import DATA_ENV, Dataset, load_split, subset
from .enum import ErrorCode, FashionLabel, Mode, Split
from .exceptions import InvariantError, QtflError, UsageError
from .fed import BYTES_PER_PARAM, FedConfig, FederatedServer
from .qstate import MAX_QUBITS, AnsatzSpec
from .qtmap import DEFAULT_HIDDEN, qt_param_count, qubits_required
from .train import (
    DEFAULT_BATCH, DEFAULT_LR, ClassicalEngine, Engine, QuantumTrainEngine,
    train_centralized)

#** Variables **#
__all__ = [
    'METRICS_FILE',
    'CONFUSION_FILE',
    'MANIFEST_FILE',

    'RunConfig',
    'MetricsRow',

    'parse_config',
    'build_engine',
    'run_experiment',
    'write_metrics_csv',
    'write_confusion_csv',
    'evaluate_exported',
    'main',
]

METRICS_FILE   = 'metrics.csv'
CONFUSION_FILE = 'confusion.csv'
MANIFEST_FILE  = 'manifest.json'

#: fallback data directory when neither config nor environment names one
DEFAULT_DATA_DIR = 'data'

METRICS_HEADER = ['run', 'round', 'global_acc', 'global_loss', 'params', 'update_bytes']

#** Classes **#

def mode_validator(mode: Any) -> Mode:
    """
    pyderive Mode validator function
    """
    if isinstance(mode, Mode):
        return mode
    if isinstance(mode, str):
        return Mode(mode)
    raise ValueError(f'Invalid Mode: {mode!r}')

ModeT = Annotated[Mode, Validator[mode_validator]]

def int_validator(value: Any) -> Any:
    """
    reject booleans and non-integral numbers before typecasting
    """
    integral = isinstance(value, int) \
        or (isinstance(value, float) and value.is_integer())
    if isinstance(value, bool) or not integral:
        raise ValueError(f'Invalid int: {value!r}')
    return value

def float_validator(value: Any) -> Any:
    """
    accept only real numbers (no booleans or strings)
    """
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValueError(f'Invalid float: {value!r}')
    return value

def bool_validator(value: Any) -> Any:
    """
    accept only true booleans
    """
    if not isinstance(value, bool):
        raise ValueError(f'Invalid bool: {value!r}')
    return value

IntT   = Annotated[int, PreValidator[int_validator]]
FloatT = Annotated[float, PreValidator[float_validator]]
BoolT  = Annotated[bool, PreValidator[bool_validator]]

class RunConfig(BaseModel, typecast=True):
    """
    Fully Resolved Settings of One Experiment Invocation
    """
    mode: ModeT = Mode.FederatedQT
    """Experiment pipeline"""
    rounds: IntT = 1
    """Communication rounds (federated modes)"""
    epochs: IntT = 1
    """Training epochs (centralized modes)"""
    local_epochs: IntT = 1
    """Local passes per client per round (federated modes)"""
    clients: IntT = 5
    """Number of federated clients"""
    n_qubits: IntT = 13
    """Circuit width; 2^n_qubits must cover every classical weight"""
    qnn_blocks: IntT = 16
    """Repeated U3 + CU3-ring blocks in the ansatz"""
    mapping_hidden: IntT = DEFAULT_HIDDEN
    """Hidden width of the mapping model"""
    batch: IntT = DEFAULT_BATCH
    lr: FloatT = DEFAULT_LR
    seed: IntT = 0
    subset: IntT = 0
    """Stratified training subset size (0 keeps the full split)"""
    test_subset: IntT = 0
    """Stratified test subset size (0 keeps the full split)"""
    data_dir: Optional[str] = None
    """Directory holding the idx files (falls back to $PYQTFL_DATA)"""
    output_dir: str = 'runs'
    workers: IntT = 1
    """Threads used to train clients within a round"""
    log_gradients: BoolT = False
    """Debug-log per-step gradient norms"""
    export_model: Optional[str] = None
    """Write the final classical theta to this `.npy` path"""
    log_level: str = 'INFO'

    @property
    def label(self) -> str:
        if self.mode.federated:
            return f'r{self.rounds}-e{self.local_epochs}-c{self.clients}'
        kind = 'qt' if self.mode.quantum else 'classical'
        return f'centralized-{kind}-e{self.epochs}'

    def verify(self, n_params: int = REFERENCE_PARAMS):
        """
        check cross-field constraints against the target model size

        :param n_params: classical parameter count M of the target model
        """
        positive = ('batch', 'workers', 'clients', 'qnn_blocks', 'mapping_hidden')
        for name in positive:
            if getattr(self, name) < 1:
                raise UsageError(f'{name} must be positive: {getattr(self, name)}')
        if self.mode.federated:
            if self.rounds < 1 or self.local_epochs < 1:
                raise UsageError('federated runs need rounds >= 1 and local_epochs >= 1')
        elif self.epochs < 1:
            raise UsageError(f'epochs must be positive: {self.epochs}')
        if self.lr <= 0:
            raise UsageError(f'learning rate must be positive: {self.lr}')
        if self.subset < 0 or self.test_subset < 0:
            raise UsageError('subset sizes must be non-negative')
        if self.mode.quantum:
            if not 1 <= self.n_qubits <= MAX_QUBITS:
                raise UsageError(f'n_qubits={self.n_qubits} outside 1..{MAX_QUBITS}')
            if 2 ** self.n_qubits < n_params:
                raise UsageError(
                    f'2^{self.n_qubits} = {2 ** self.n_qubits} < {n_params} '
                    f'model parameters; need n_qubits >= {qubits_required(n_params)}')

    def resolve_data_dir(self) -> str:
        return self.data_dir or os.environ.get(DATA_ENV) or DEFAULT_DATA_DIR

    def manifest(self) -> Dict[str, Any]:
        """
        json-ready echo of every resolved setting
        """
        values = {name: getattr(self, name) for name in RUN_FIELDS}
        values['mode'] = self.mode.value
        return values

#: RunConfig attribute names in declaration order
RUN_FIELDS: Tuple[str, ...] = tuple(RunConfig.__annotations__)

class MetricsRow(NamedTuple):
    """
    One Metrics CSV Row (a round for federated runs, an epoch otherwise)
    """
    run:               str
    round:             int
    global_accuracy:   float
    global_loss:       float
    params:            int
    update_bytes:      int
    client_accuracies: Tuple[float, ...] = ()

    def values(self) -> List[Any]:
        return [
            self.run, self.round, self.global_accuracy, self.global_loss,
            self.params, self.update_bytes, *self.client_accuracies]

#** Functions **#

def build_parser() -> ArgumentParser:
    """
    command line flags; unset flags stay absent so file values survive
    """
    parser = ArgumentParser(
        prog='pyqtfl',
        description='quantum-train federated learning simulator',
        argument_default=SUPPRESS,
    )
    parser.add_argument('--config', help='json file of RunConfig values')
    parser.add_argument('--mode', choices=[m.value for m in Mode])
    parser.add_argument('--rounds', type=int)
    parser.add_argument('--epochs', type=int)
    parser.add_argument('--local-epochs', dest='local_epochs', type=int)
    parser.add_argument('--clients', type=int)
    parser.add_argument('--qubits', dest='n_qubits', type=int)
    parser.add_argument('--blocks', dest='qnn_blocks', type=int)
    parser.add_argument('--hidden', dest='mapping_hidden', type=int)
    parser.add_argument('--batch', type=int)
    parser.add_argument('--lr', type=float)
    parser.add_argument('--seed', type=int)
    parser.add_argument('--subset', type=int)
    parser.add_argument('--test-subset', dest='test_subset', type=int)
    parser.add_argument('--data-dir', dest='data_dir')
    parser.add_argument('--output-dir', dest='output_dir')
    parser.add_argument('--workers', type=int)
    parser.add_argument('--log-gradients', dest='log_gradients', action='store_true')
    parser.add_argument('--export-model', dest='export_model')
    parser.add_argument('--log-level', dest='log_level',
        choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'])
    return parser

def parse_config(
    args: Optional[Sequence[str]] = None, file: Optional[str] = None) -> RunConfig:
    """
    resolve flags over json file values over defaults

    :param args: command line arguments (defaults to sys.argv)
    :param file: json config path (a `--config` flag takes precedence)
    :return:     verified run configuration
    """
    flags = vars(build_parser().parse_args(args))
    path  = flags.pop('config', file)
    values: Dict[str, Any] = {}
    if path is not None:
        try:
            with open(path, 'r', encoding='utf-8') as f:
                values = json.load(f)
        except (OSError, ValueError) as e:
            raise UsageError(f'cannot read config {path!r}: {e}') from None
        if not isinstance(values, dict):
            raise UsageError(f'config {path!r} must hold a json object')
        unknown = sorted(set(values) - set(RUN_FIELDS))
        if unknown:
            raise UsageError(f'unknown config keys: {", ".join(unknown)}')
    values.update(flags)
    try:
        config = RunConfig(**values)
    except (TypeError, ValueError) as e:
        raise UsageError(f'invalid configuration: {e}') from None
    config.verify()
    return config

def build_engine(config: RunConfig, skeleton: ClassicalModel) -> Engine:
    """
    engine matching the configured mode
    """
    if config.mode.quantum:
        spec = AnsatzSpec(config.n_qubits, config.qnn_blocks)
        return QuantumTrainEngine(
            spec, skeleton, config.mapping_hidden,
            log_gradients=config.log_gradients)
    return ClassicalEngine(skeleton, log_gradients=config.log_gradients)

def write_metrics_csv(rows: Sequence[MetricsRow], path: str):
    """
    write one csv line per round/epoch below the metrics header

    :param rows: metric rows in round order
    :param path: destination file
    """
    if not rows:
        raise InvariantError('no metric rows to write')
    width  = max(len(row.client_accuracies) for row in rows)
    header = METRICS_HEADER + [f'client_acc_{n}' for n in range(width)]
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            writer.writerow(row.values())

def write_confusion_csv(matrix: np.ndarray, path: str):
    """
    write a 10x10 confusion matrix (rows true, columns predicted)

    :param matrix: integer confusion counts
    :param path:   destination file
    """
    matrix = np.asarray(matrix)
    size   = len(FashionLabel)
    if matrix.shape != (size, size):
        raise InvariantError(f'confusion must be {size}x{size}: {matrix.shape}')
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow([label.title for label in FashionLabel])
        for row in matrix:
            writer.writerow([int(v) for v in row])

def largest_confusion(matrix: np.ndarray) -> Dict[str, Any]:
    """
    most frequent off-diagonal (true, predicted) pair
    """
    off = np.array(matrix, dtype=np.int64)
    np.fill_diagonal(off, -1)
    true, pred = np.unravel_index(int(off.argmax()), off.shape)
    return {
        'true':      FashionLabel(int(true)).title,
        'predicted': FashionLabel(int(pred)).title,
        'count':     int(off[true, pred]),
    }

def evaluate_exported(path: str, dataset: Dataset) -> Evaluation:
    """
    evaluate an exported classical theta without any circuit simulation

    :param path:    `.npy` file written by `--export-model`
    :param dataset: labeled evaluation data
    :return:        evaluation of the reference network carrying that theta
    """
    theta = np.load(path, allow_pickle=False)
    model = build_reference_model(seed=None).with_theta(theta)
    return evaluate(model, dataset)

def _load_data(config: RunConfig) -> Tuple[Dataset, Dataset]:
    directory = config.resolve_data_dir()
    train = load_split(directory, Split.Train)
    test  = load_split(directory, Split.Test)
    return train, test

def _run_centralized(config: RunConfig, engine: Engine,
    train: Dataset, test: Dataset) -> Tuple[List[MetricsRow], Evaluation, np.ndarray]:
    vector, history = train_centralized(
        engine, train, test, config.epochs, config.batch, config.lr, config.seed)
    rows = [
        MetricsRow(config.label, m.epoch, m.evaluation.accuracy,
            m.evaluation.loss, engine.n_params, 0)
        for m in history
    ]
    return rows, history[-1].evaluation, vector

def _run_federated(config: RunConfig, engine: Engine,
    train: Dataset, test: Dataset) -> Tuple[List[MetricsRow], Evaluation, np.ndarray]:
    fed = FedConfig(
        n_clients=config.clients,
        rounds=config.rounds,
        local_epochs=config.local_epochs,
        batch_size=config.batch,
        lr=config.lr,
        seed=config.seed,
        mode=engine.mode,
        workers=config.workers,
    )
    server  = FederatedServer(fed, engine, train, test)
    history = server.run()
    rows = [
        MetricsRow(config.label, m.round, m.global_accuracy, m.global_loss,
            m.n_params, m.update_bytes, m.client_accuracies)
        for m in history[1:]
    ]
    assert server.final is not None
    return rows, server.final, server.global_vector

def run_experiment(config: RunConfig,
    train: Optional[Dataset] = None, test: Optional[Dataset] = None) -> ErrorCode:
    """
    execute the configured pipeline and write its result artifacts

    :param config: verified run configuration
    :param train:  training data (loaded from the data directory when omitted)
    :param test:   test data (loaded from the data directory when omitted)
    :return:       process exit status
    """
    logger  = getLogger('pyqtfl').getChild('cli')
    written: List[str] = []
    started = time.perf_counter()
    try:
        skeleton = build_reference_model(seed=None)
        config.verify(skeleton.parameter_count)
        if train is None or test is None:
            train, test = _load_data(config)
        if config.subset:
            train = subset(train, config.subset, config.seed)
        if config.test_subset:
            test = subset(test, config.test_subset, config.seed)
        engine = build_engine(config, skeleton)
        logger.info(
            f'{config.label} | mode={config.mode.value} train={len(train)} '
            f'test={len(test)} trainable={engine.n_params}')
        runner = _run_federated if config.mode.federated else _run_centralized
        rows, final, vector = runner(config, engine, train, test)

        os.makedirs(config.output_dir, exist_ok=True)
        metrics   = os.path.join(config.output_dir, METRICS_FILE)
        confusion = os.path.join(config.output_dir, CONFUSION_FILE)
        manifest  = os.path.join(config.output_dir, MANIFEST_FILE)
        written.append(metrics)
        write_metrics_csv(rows, metrics)
        written.append(confusion)
        write_confusion_csv(final.confusion, confusion)
        if config.export_model:
            written.append(config.export_model)
            theta = flatten(engine.materialize(vector))
            with open(config.export_model, 'wb') as f:
                np.save(f, theta)

        classical = skeleton.parameter_count
        compact   = qt_param_count(
            config.n_qubits, config.qnn_blocks, config.mapping_hidden)
        record = {
            'label':              config.label,
            'config':             config.manifest(),
            'classical_params':   classical,
            'qt_params':          compact,
            'trainable_params':   engine.n_params,
            'reduction_pct':      round(100.0 * (1.0 - compact / classical), 2),
            'qubits_required':    qubits_required(classical),
            'update_bytes':       engine.n_params * BYTES_PER_PARAM,
            'bytes_ratio':        compact / classical,
            'final_accuracy':     final.accuracy,
            'final_loss':         final.loss,
            'largest_confusion':  largest_confusion(final.confusion),
            'wall_time_s':        round(time.perf_counter() - started, 3),
            'seed':               config.seed,
        }
        written.append(manifest)
        with open(manifest, 'w', encoding='utf-8') as f:
            json.dump(record, f, indent=2)
        logger.info(
            f'{config.label} | acc={final.accuracy:.4f} loss={final.loss:.4f} '
            f'wrote {config.output_dir}')
        return ErrorCode.Success
    except (QtflError, OSError) as e:
        for path in written:
            if os.path.exists(path):
                os.remove(path)
        code = getattr(e, 'code', None) or ErrorCode.Unspecified
        logger.error(f'{config.label} | {type(e).__name__}: {e}')
        return ErrorCode(code)

def main(args: Optional[Sequence[str]] = None) -> int:
    """
    command line entrypoint
    """
    try:
        config = parse_config(args)
    except UsageError as e:
        basicConfig(level='ERROR')
        getLogger('pyqtfl').error(f'usage | {e}')
        return int(ErrorCode.UsageError)
    basicConfig(
        level=config.log_level,
        format='%(asctime)s %(levelname)s %(name)s %(message)s')
    return int(run_experiment(config))
