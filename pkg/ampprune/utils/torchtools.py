"""Binary checkpoint format.

Layout, all integers little-endian::

    magic        4 bytes   b"AMPC"
    version      uint32
    header_len   uint64
    header       header_len bytes of UTF-8 JSON:
                 {"config": {...}, "tensors": [{"name", "shape", "byte_offset"}, ...]}
    payload      row-major little-endian float32 tensors, concatenated in
                 manifest order, offsets relative to the payload start

The header is canonical JSON (sorted keys, no whitespace) so identical weights
always serialize to identical bytes.
"""
from __future__ import absolute_import
from __future__ import print_function
from __future__ import division

__all__ = ['MAGIC', 'FORMAT_VERSION', 'serialize', 'save_checkpoint', 'load_checkpoint',
           'fingerprint', 'deserialize']

import hashlib
import json
import os.path as osp
import struct

import numpy as np
import torch

from ampprune.models.config import ModelConfig
from ampprune.models.weights import TransformerWeights, LAYER_TENSORS, expected_layer_shapes
from ampprune.exceptions import (
    BadMagicError, VersionMismatchError, TruncatedCheckpointError,
    TensorShapeMismatchError, ManifestError
)
from .tools import mkdir_if_missing


MAGIC = b'AMPC'
FORMAT_VERSION = 1
_PREAMBLE = struct.Struct('<4sIQ')
_ITEMSIZE = 4


def _canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(',', ':'), ensure_ascii=False).encode('utf-8')


def _encode(w):
    manifest = []
    chunks = []
    offset = 0
    for name, tensor in w.parameters():
        if tensor.dtype != torch.float32:
            raise TypeError('{} must be float32 to be saved, got {}'.format(name, tensor.dtype))
        data = np.ascontiguousarray(tensor.detach().cpu().numpy(), dtype='<f4').tobytes()
        manifest.append({'name': name, 'shape': list(tensor.shape), 'byte_offset': offset})
        chunks.append(data)
        offset += len(data)
    header = _canonical_json({'config': w.config.to_dict(), 'tensors': manifest})
    return header, b''.join(chunks)


def serialize(w):
    """Returns the full checkpoint bytes of ``w``."""
    header, payload = _encode(w)
    return _PREAMBLE.pack(MAGIC, FORMAT_VERSION, len(header)) + header + payload


def fingerprint(w):
    """SHA-256 hex digest of the canonical header and payload bytes."""
    header, payload = _encode(w)
    digest = hashlib.sha256()
    digest.update(header)
    digest.update(payload)
    return digest.hexdigest()


def save_checkpoint(w, fpath):
    r"""Saves weights to ``fpath``.

    Args:
        w (TransformerWeights): float32 weights, dense or pruned.
        fpath (str): output path; missing directories are created.

    Returns:
        str: fingerprint of the saved weights.

    Examples::
        >>> from ampprune.utils import save_checkpoint
        >>> save_checkpoint(weights, 'log/toy/model.ampc')
    """
    header, payload = _encode(w)
    mkdir_if_missing(osp.dirname(fpath))
    with open(fpath, 'wb') as f:
        f.write(_PREAMBLE.pack(MAGIC, FORMAT_VERSION, len(header)))
        f.write(header)
        f.write(payload)
    digest = hashlib.sha256(header + payload).hexdigest()
    print('Checkpoint saved to "{}" (fingerprint {})'.format(fpath, digest[:12]))
    return digest


def _expected_shapes(config, layer_dims):
    shapes = {
        'token_embedding': (config.vocab_size, config.d_model),
        'final_norm': (config.d_model,),
        'lm_head': (config.d_model, config.vocab_size),
    }
    for i, (n_heads, d_intermediate) in enumerate(layer_dims):
        for name, shape in expected_layer_shapes(config.d_model, n_heads, config.d_head,
                                                 d_intermediate).items():
            shapes['layers.{}.{}'.format(i, name)] = shape
    return shapes


def _layer_dims(config, entries):
    dims = []
    for i in range(config.n_layers):
        wq, wgate = entries['layers.{}.Wq'.format(i)], entries['layers.{}.Wgate'.format(i)]
        if len(wq['shape']) != 2 or wq['shape'][1] % config.d_head != 0:
            raise TensorShapeMismatchError(
                'layers.{}.Wq'.format(i),
                'shape {} is not (d_model, n_heads*{})'.format(wq['shape'], config.d_head))
        if len(wgate['shape']) != 2:
            raise TensorShapeMismatchError('layers.{}.Wgate'.format(i),
                                           'shape {} is not a matrix'.format(wgate['shape']))
        n_heads, d_intermediate = wq['shape'][1] // config.d_head, wgate['shape'][1]
        if not 1 <= n_heads <= config.n_heads:
            raise TensorShapeMismatchError('layers.{}.Wq'.format(i),
                                           '{} heads outside [1, {}]'.format(n_heads, config.n_heads))
        if not 1 <= d_intermediate <= config.d_intermediate:
            raise TensorShapeMismatchError(
                'layers.{}.Wgate'.format(i),
                '{} MLP pairs outside [1, {}]'.format(d_intermediate, config.d_intermediate))
        dims.append((n_heads, d_intermediate))
    return dims


def _is_int(x):
    return isinstance(x, int) and not isinstance(x, bool)


def _read_entry(entry, source):
    try:
        name, shape, offset = entry['name'], entry['shape'], entry['byte_offset']
    except (KeyError, TypeError):
        raise ManifestError('{}: manifest entry {!r} needs name, shape and byte_offset'.format(
            source, entry))
    if not isinstance(name, str) or not isinstance(shape, list) or not _is_int(offset):
        raise ManifestError('{}: malformed manifest entry {!r}'.format(source, entry))
    if not all(_is_int(s) for s in shape):
        raise ManifestError('{}: tensor {} has a non-integer shape {!r}'.format(
            source, name, shape))
    return {'name': name, 'shape': shape, 'byte_offset': offset}


def deserialize(blob, source='<bytes>'):
    """Decodes checkpoint bytes into ``TransformerWeights``.

    Raises:
        BadMagicError, VersionMismatchError, TruncatedCheckpointError,
        ManifestError, TensorShapeMismatchError
    """
    if len(blob) < _PREAMBLE.size:
        raise TruncatedCheckpointError('{}: file ends inside the preamble'.format(source))
    magic, version, header_len = _PREAMBLE.unpack_from(blob, 0)
    if magic != MAGIC:
        raise BadMagicError('{}: bad magic {!r}, expected {!r}'.format(source, magic, MAGIC))
    if version != FORMAT_VERSION:
        raise VersionMismatchError('{}: format version {} is not supported (expected {})'.format(
            source, version, FORMAT_VERSION))
    payload_start = _PREAMBLE.size + header_len
    if payload_start > len(blob):
        raise TruncatedCheckpointError('{}: file ends inside the header'.format(source))
    try:
        header = json.loads(blob[_PREAMBLE.size:payload_start].decode('utf-8'))
        config = ModelConfig.from_dict(header['config'])
        manifest = header['tensors']
    except (ValueError, KeyError, TypeError) as e:
        raise ManifestError('{}: unreadable header: {}'.format(source, e))
    if not isinstance(manifest, list):
        raise ManifestError('{}: tensor manifest is not a list'.format(source))
    manifest = [_read_entry(entry, source) for entry in manifest]

    entries = {}
    expected_offset = 0
    for entry in manifest:
        name = entry['name']
        if name in entries:
            raise ManifestError('{}: tensor {} listed twice'.format(source, name))
        if entry['byte_offset'] != expected_offset:
            raise ManifestError('{}: tensor {} starts at byte {}, expected {}'.format(
                source, name, entry['byte_offset'], expected_offset))
        if any(int(s) < 1 for s in entry['shape']):
            raise TensorShapeMismatchError(name, 'empty dimension in {}'.format(entry['shape']))
        entries[name] = entry
        expected_offset += int(np.prod(entry['shape'])) * _ITEMSIZE

    expected_names = ['token_embedding', 'final_norm', 'lm_head'] + [
        'layers.{}.{}'.format(i, name) for i in range(config.n_layers) for name in LAYER_TENSORS]
    missing = [name for name in expected_names if name not in entries]
    if missing:
        raise ManifestError('{}: missing tensor {}'.format(source, missing[0]))
    extra = sorted(set(entries) - set(expected_names))
    if extra:
        raise ManifestError('{}: unexpected tensor {}'.format(source, extra[0]))

    shapes = _expected_shapes(config, _layer_dims(config, entries))
    for name, entry in entries.items():
        if tuple(entry['shape']) != shapes[name]:
            raise TensorShapeMismatchError(name, 'stored shape {} but config implies {}'.format(
                entry['shape'], list(shapes[name])))

    payload = memoryview(blob)[payload_start:]
    tensors = {}
    for entry in manifest:
        count = int(np.prod(entry['shape']))
        end = entry['byte_offset'] + count * _ITEMSIZE
        if end > len(payload):
            raise TruncatedCheckpointError('{}: payload ends inside tensor {}'.format(
                source, entry['name']))
        array = np.frombuffer(payload, dtype='<f4', count=count, offset=entry['byte_offset'])
        tensors[entry['name']] = torch.from_numpy(
            array.astype(np.float32).reshape(entry['shape']))
    if expected_offset != len(payload):
        raise ManifestError('{}: {} trailing bytes after the last tensor'.format(
            source, len(payload) - expected_offset))
    return TransformerWeights.from_named_tensors(config, tensors)


def load_checkpoint(fpath):
    r"""Loads a checkpoint written by :func:`save_checkpoint`.

    Args:
        fpath (str): path to checkpoint.

    Returns:
        TransformerWeights

    Examples::
        >>> from ampprune.utils import load_checkpoint
        >>> weights = load_checkpoint('log/toy/model.ampc')
    """
    if fpath is None:
        raise ValueError('File path is None')
    if not osp.exists(fpath):
        raise FileNotFoundError('File is not found at "{}"'.format(fpath))
    with open(fpath, 'rb') as f:
        blob = f.read()
    return deserialize(blob, source=fpath)
