"""
Checkpoint files: a JSON manifest next to a little-endian float64 blob.

    <stem>.json   format tag, per-network roles / shapes / layer specs,
                  optimizer variants and scalars, seeds, free metadata
    <stem>.bin    every array from the manifest, concatenated in order
"""
import json
import pathlib

import numpy as np

from .errors import DomainError
from .neuralnet import Layer, LayerSpec, NetworkParams, OptimizerState


CHECKPOINT_FORMAT = 'srlcrawler-checkpoint/1'
BLOB_DTYPE = '<f8'


def _stem_paths(stem):
    stem = pathlib.Path(stem)
    return stem.with_suffix('.json'), stem.with_suffix('.bin')


def save_checkpoint(stem, networks, optimizers=None, seeds=None, metadata=None):
    """
    Write networks (name -> NetworkParams) and optional optimizer states
    (name -> OptimizerState).

    returns the manifest path
    """
    manifest_path, blob_path = _stem_paths(stem)
    manifest_path.parent.mkdir(parents=True, exist_ok=True)

    arrays = []
    offset = 0

    def claim(array):
        nonlocal offset
        array = np.ascontiguousarray(array, dtype=BLOB_DTYPE)
        entry = {'offset': offset, 'shape': list(array.shape)}
        arrays.append(array.ravel())
        offset += array.size
        return entry

    manifest = {
        'format': CHECKPOINT_FORMAT,
        'networks': {},
        'optimizers': {},
        'seeds': dict(seeds or {}),
        'metadata': dict(metadata or {}),
        }

    for name, params in networks.items():
        manifest['networks'][name] = {
            'role': params.role,
            'output_scale': params.output_scale,
            'layers': [
                {
                    'width': layer.spec.width,
                    'activation': layer.spec.activation,
                    'dropout_rate': layer.spec.dropout_rate,
                    'weights': claim(layer.weights),
                    'biases': claim(layer.biases),
                }
                for layer in params.layers],
            }

    for name, opt in (optimizers or {}).items():
        manifest['optimizers'][name] = {
            'variant': opt.variant,
            'learning_rate': opt.learning_rate,
            'step_count': opt.step_count,
            'hyper': opt.hyper,
            'first_moment': None if opt.first_moment is None else claim(opt.first_moment),
            'second_moment': None if opt.second_moment is None else claim(opt.second_moment),
            }

    blob = np.concatenate(arrays) if arrays else np.zeros(0, dtype=BLOB_DTYPE)
    blob.astype(BLOB_DTYPE).tofile(blob_path)

    with open(manifest_path, 'w', encoding='utf-8') as handle:
        json.dump(manifest, handle, indent=2, sort_keys=True)

    return manifest_path


def load_checkpoint(stem):
    """
    Read a checkpoint written by save_checkpoint.

    returns dict with 'networks', 'optimizers', 'seeds', 'metadata'
    """
    manifest_path, blob_path = _stem_paths(stem)
    with open(manifest_path, encoding='utf-8') as handle:
        manifest = json.load(handle)

    if manifest.get('format') != CHECKPOINT_FORMAT:
        raise DomainError(
            f"{manifest_path} has format {manifest.get('format')!r}, "
            f"expected {CHECKPOINT_FORMAT!r}")

    blob = np.fromfile(blob_path, dtype=BLOB_DTYPE)

    def take(entry):
        size = int(np.prod(entry['shape'], dtype=int))
        chunk = blob[entry['offset']:entry['offset'] + size]
        if chunk.size != size:
            raise DomainError(f"{blob_path} is truncated")
        return chunk.astype(float).reshape(entry['shape'])

    networks = {}
    for name, net in manifest['networks'].items():
        layers = tuple(
            Layer(take(layer['weights']), take(layer['biases']),
                  LayerSpec(layer['width'], layer['activation'], layer['dropout_rate']))
            for layer in net['layers'])
        networks[name] = NetworkParams(layers, role=net['role'], output_scale=net['output_scale'])

    optimizers = {}
    for name, opt in manifest['optimizers'].items():
        optimizers[name] = OptimizerState(
            variant=opt['variant'],
            learning_rate=opt['learning_rate'],
            step_count=opt['step_count'],
            first_moment=None if opt['first_moment'] is None else take(opt['first_moment']),
            second_moment=None if opt['second_moment'] is None else take(opt['second_moment']),
            hyper=opt['hyper'])

    return {
        'networks': networks,
        'optimizers': optimizers,
        'seeds': manifest['seeds'],
        'metadata': manifest['metadata'],
        }
