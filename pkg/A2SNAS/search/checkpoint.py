"""
Checkpoint directories.

A checkpoint holds
    manifest     JSON: format_version, kind, fingerprint, epoch, step, metrics, optimizers, rng
    genotype     genotype document of the network
    weights.bin  "A2SNASW1", then per tensor in name order: u32 name length, name (utf-8), u8 rank,
                 u32 extents, float32 values; all little-endian
    history.csv  optional per-epoch history table
"""
import json
import struct
from collections import namedtuple
from pathlib import Path

import numpy as np

from . import history as history_table
from ..exception import CheckpointFormatException, FingerprintMismatchException, GenotypeParseException
from ..network import genotype as genotype_io
from ..network.supernet import Supernet
from ..tensor.rng import Rng
from ..tensor.tensor import MAX_RANK

FORMAT_VERSION = 1
MAGIC = b'A2SNASW1'
MANIFEST_FILE = 'manifest'
GENOTYPE_FILE = 'genotype'
WEIGHTS_FILE = 'weights.bin'
HISTORY_FILE = 'history.csv'
OPTIMIZER_PREFIX = 'optimizer.'

Checkpoint = namedtuple('Checkpoint', 'manifest genotype tensors history')


"""
weights.bin
"""


def encode_weights(tensors):
    """
    :type tensors: dict
    :param tensors: name -> array

    :rtype: bytes
    """
    chunks = [MAGIC]
    for name in sorted(tensors):
        array = np.asarray(tensors[name])
        if array.ndim > MAX_RANK:
            raise CheckpointFormatException(f"tensor '{name}' has rank {array.ndim} > {MAX_RANK}")
        encoded = name.encode('utf-8')
        chunks.append(struct.pack('<I', len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack('<B', array.ndim))
        chunks.append(struct.pack(f'<{array.ndim}I', *array.shape))
        chunks.append(np.ascontiguousarray(array, dtype='<f4').tobytes())
    return b''.join(chunks)


def decode_weights(raw):
    """
    :type raw: bytes

    :raise: CheckpointFormatException for a wrong magic, a truncated entry or trailing bytes

    :rtype: dict
    :returns: name -> float32 array
    """
    if raw[:len(MAGIC)] != MAGIC:
        raise CheckpointFormatException(f"bad magic {raw[:len(MAGIC)]!r}, expected {MAGIC!r}")
    offset = len(MAGIC)
    tensors = {}

    def take(size, what):
        nonlocal offset
        if offset + size > len(raw):
            raise CheckpointFormatException(f"truncated weights file while reading {what} at byte {offset}")
        chunk = raw[offset:offset + size]
        offset += size
        return chunk

    while offset < len(raw):
        name_length, = struct.unpack('<I', take(4, 'name length'))
        name = take(name_length, 'name').decode('utf-8')
        rank, = struct.unpack('<B', take(1, f"rank of '{name}'"))
        if rank > MAX_RANK:
            raise CheckpointFormatException(f"tensor '{name}' has rank {rank} > {MAX_RANK}")
        shape = struct.unpack(f'<{rank}I', take(4 * rank, f"extents of '{name}'"))
        count = int(np.prod(shape, dtype=np.int64))
        values = np.frombuffer(take(4 * count, f"values of '{name}'"), dtype='<f4')
        if name in tensors:
            raise CheckpointFormatException(f"duplicate tensor '{name}'")
        tensors[name] = values.astype(np.float32).reshape(shape)
    return tensors


"""
Checkpoint directories
"""


def _optimizers(state):
    if state is None:
        return {}
    return {label: optimizer for label, optimizer in (('weight', state.weight_optimizer),
                                                      ('arch', state.arch_optimizer)) if optimizer is not None}


def save_checkpoint(directory, net, state=None, metrics=None, rng_state=None, history_columns=None):
    """
    Writes a checkpoint of a network and, optionally, its optimization state.

    :type directory: Path | str
    :param directory: checkpoint directory, created if missing

    :type net: Supernet | CompactNet
    :param net: network whose parameters (architecture logits and running statistics included) are saved

    :type state: TrainState
    :param state: counters, optimizer moments and history

    :type metrics: dict
    :param metrics: metric summary written to the manifest

    :type rng_state: dict
    :param rng_state: state of the run's root random stream

    :type history_columns: [str]
    :param history_columns: columns of history.csv, written only if given together with state

    :returns: None
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    tensors = net.store.state()
    optimizers = _optimizers(state)
    for label, optimizer in optimizers.items():
        for slot in optimizer.slot_names:
            for name, array in optimizer.slots[slot].items():
                tensors[f"{OPTIMIZER_PREFIX}{label}.{slot}/{name}"] = array

    genotype = net.genotype() if isinstance(net, Supernet) else net.genotype
    manifest = {
        'format_version': FORMAT_VERSION,
        'kind': 'supernet' if isinstance(net, Supernet) else 'compact',
        'fingerprint': net.config.fingerprint,
        'epoch': state.epoch if state is not None else 0,
        'step': state.step if state is not None else 0,
        'metrics': dict(metrics or {}),
        'optimizers': {label: {'t': optimizer.t} for label, optimizer in optimizers.items()},
        'rng': dict(rng_state or {}),
    }

    (directory / MANIFEST_FILE).write_text(json.dumps(manifest, indent=2, sort_keys=True) + '\n', encoding='utf-8')
    genotype_io.save_genotype(genotype, directory / GENOTYPE_FILE)
    (directory / WEIGHTS_FILE).write_bytes(encode_weights(tensors))
    if state is not None and history_columns is not None:
        (directory / HISTORY_FILE).write_text(history_table.to_csv(state.history, history_columns), encoding='utf-8')


def load_checkpoint(directory):
    """
    Reads a checkpoint directory.

    :raise: CheckpointFormatException for missing files, an unknown format version or a corrupt weights file

    :rtype: Checkpoint
    """
    directory = Path(directory)
    for name in (MANIFEST_FILE, GENOTYPE_FILE, WEIGHTS_FILE):
        if not (directory / name).is_file():
            raise CheckpointFormatException(f"{directory / name} does not exist")
    try:
        manifest = json.loads((directory / MANIFEST_FILE).read_text(encoding='utf-8'))
    except json.JSONDecodeError as e:
        raise CheckpointFormatException(f"manifest is not valid JSON: {e.msg}") from None
    if not isinstance(manifest, dict) or manifest.get('format_version') != FORMAT_VERSION:
        version = manifest.get('format_version') if isinstance(manifest, dict) else None
        raise CheckpointFormatException(f"unsupported checkpoint format version {version!r}, "
                                        f"expected {FORMAT_VERSION}")
    try:
        genotype = genotype_io.load_genotype(directory / GENOTYPE_FILE)
    except GenotypeParseException as e:
        raise CheckpointFormatException(f"invalid genotype: {e}") from None
    tensors = decode_weights((directory / WEIGHTS_FILE).read_bytes())
    history = None
    if (directory / HISTORY_FILE).is_file():
        history = history_table.from_csv((directory / HISTORY_FILE).read_text(encoding='utf-8'))
    return Checkpoint(manifest, genotype, tensors, history)


def restore_checkpoint(checkpoint, net, state=None, rng=None):
    """
    Loads a checkpoint into a network and, optionally, a TrainState and the run's random stream.

    :type checkpoint: Checkpoint
    :type net: Supernet | CompactNet
    :type state: TrainState

    :type rng: Rng
    :param rng: if given, its counter is set to the saved one; the saved seed must match

    :raise: FingerprintMismatchException if the checkpoint belongs to another network config
    :raise: CheckpointFormatException if parameter or optimizer names do not match, or the checkpoint
        was written by a run with another seed

    :returns: None
    """
    manifest = checkpoint.manifest
    if manifest.get('fingerprint') != net.config.fingerprint:
        raise FingerprintMismatchException(f"checkpoint fingerprint {manifest.get('fingerprint')} does not match "
                                           f"network config {net.config.fingerprint}")
    kind = 'supernet' if isinstance(net, Supernet) else 'compact'
    if manifest.get('kind') != kind:
        raise CheckpointFormatException(f"checkpoint holds a {manifest.get('kind')}, expected a {kind}")
    saved_rng = None
    if rng is not None and manifest.get('rng'):
        saved_rng = Rng.from_state(manifest['rng'])
        if saved_rng.seed != rng.seed:
            raise CheckpointFormatException(f"checkpoint was written by a run with seed {saved_rng.seed}, "
                                            f"this run has seed {rng.seed}")

    weights = {k: v for k, v in checkpoint.tensors.items() if not k.startswith(OPTIMIZER_PREFIX)}
    expected = set(net.store.names())
    if set(weights) != expected:
        missing = sorted(expected - set(weights))
        unexpected = sorted(set(weights) - expected)
        raise CheckpointFormatException(f"parameter name mismatch: missing={missing}, unexpected={unexpected}")
    net.store.load_state(weights)
    if saved_rng is not None:
        rng.counter = saved_rng.counter

    if state is None:
        return
    for label, optimizer in _optimizers(state).items():
        if label not in manifest.get('optimizers', {}):
            raise CheckpointFormatException(f"checkpoint has no {label} optimizer state")
        slots = {}
        for slot in optimizer.slot_names:
            prefix = f"{OPTIMIZER_PREFIX}{label}.{slot}/"
            slots[slot] = {k[len(prefix):]: v for k, v in checkpoint.tensors.items() if k.startswith(prefix)}
            if set(slots[slot]) != set(optimizer.slots[slot]):
                raise CheckpointFormatException(f"{label} optimizer {slot} names do not match the network")
        optimizer.load_state({'t': manifest['optimizers'][label]['t'], **slots})
    state.epoch = int(manifest['epoch'])
    state.step = int(manifest['step'])
    state.history = list(checkpoint.history or [])
