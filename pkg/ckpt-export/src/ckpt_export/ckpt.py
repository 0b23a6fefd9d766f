"""Checkpoint reader: the zip archive format of the usual training
framework, parsed without importing it.

A saved checkpoint is a zip holding `<stem>/data.pkl` (a pickle of the
object that was saved, where each tensor is a rebuild call referencing a
storage by persistent id) and `<stem>/data/<key>` entries with the raw
storage bytes. The pickle is executed by a restricted unpickler that
admits only the handful of globals such files legitimately contain and
turns tensor rebuilds into numpy arrays; anything else is rejected, so a
hostile pickle fails loudly instead of running code.
"""

import io
import pickle
import zipfile
from collections import OrderedDict

import numpy as np

from .errors import CheckpointError

_STORAGE_DTYPES = {
    "FloatStorage": "<f4",
    "DoubleStorage": "<f8",
    "HalfStorage": "<f2",
    "LongStorage": "<i8",
    "IntStorage": "<i4",
    "ShortStorage": "<i2",
    "CharStorage": "i1",
    "ByteStorage": "u1",
    "BoolStorage": "b1",
}


class _StorageTag:
    """Stands in for a storage class global inside persistent ids."""

    def __init__(self, dtype: str):
        self.dtype = dtype


class _Storage:
    """One raw storage: a 1-d typed view of a zip entry."""

    def __init__(self, array: np.ndarray):
        self.array = array


def _rebuild_tensor_v2(storage, offset, size, stride, requires_grad,
                       backward_hooks, metadata=None):
    if not isinstance(storage, _Storage):
        raise CheckpointError("tensor rebuild did not receive a storage")
    flat = storage.array
    size = tuple(int(s) for s in size)
    stride = tuple(int(s) for s in stride)
    if len(stride) != len(size):
        raise CheckpointError(f"stride {stride} does not match size {size}")
    if any(s < 0 for s in stride) or offset < 0:
        raise CheckpointError("negative stride or offset")
    count = int(np.prod(size, dtype=np.int64))
    if count == 0:
        return np.zeros(size, dtype=flat.dtype)
    extent = offset + 1 + sum((sz - 1) * st for sz, st in zip(size, stride))
    if extent > flat.size:
        raise CheckpointError(
            f"tensor of size {size}, stride {stride}, offset {offset} "
            f"overruns its {flat.size}-element storage")
    itemsize = flat.dtype.itemsize
    view = np.lib.stride_tricks.as_strided(
        flat[offset:], shape=size, strides=tuple(st * itemsize for st in stride))
    return np.ascontiguousarray(view)


def _rebuild_parameter(data, requires_grad=True, backward_hooks=None):
    return data


_ALLOWED_CALLS = {
    ("torch._utils", "_rebuild_tensor_v2"): _rebuild_tensor_v2,
    ("torch._utils", "_rebuild_parameter"): _rebuild_parameter,
    ("collections", "OrderedDict"): OrderedDict,
}


class _RestrictedUnpickler(pickle.Unpickler):
    def __init__(self, file, storages):
        super().__init__(file)
        self._storages = storages

    def find_class(self, module, name):
        fn = _ALLOWED_CALLS.get((module, name))
        if fn is not None:
            return fn
        if module == "torch" and name in _STORAGE_DTYPES:
            return _StorageTag(_STORAGE_DTYPES[name])
        if module == "torch" and name.endswith("Storage"):
            raise CheckpointError(f"unsupported storage type torch.{name}")
        raise CheckpointError(
            f"checkpoint pickle references disallowed global {module}.{name}")

    def persistent_load(self, pid):
        if not (isinstance(pid, tuple) and len(pid) >= 4 and
                pid[0] == "storage"):
            raise CheckpointError(f"unrecognized persistent id {pid!r}")
        tag, key = pid[1], str(pid[2])
        if not isinstance(tag, _StorageTag):
            raise CheckpointError(f"unrecognized storage class in id {pid!r}")
        try:
            raw = self._storages[key]
        except KeyError:
            raise CheckpointError(f"storage {key!r} missing from archive") \
                from None
        return _Storage(np.frombuffer(raw, dtype=tag.dtype))


_WRAPPER_KEYS = ("state_dict", "model", "network", "net")


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], list[str]]:
    """Read a checkpoint into plain arrays.

    Returns (tensors, skipped): tensors maps flattened names to numpy
    arrays; skipped lists entries that were not tensors (step counters,
    optimizer blobs and the like), so the caller can report them.
    """
    try:
        zf = zipfile.ZipFile(path)
    except (OSError, zipfile.BadZipFile) as e:
        raise CheckpointError(f"cannot open checkpoint: {e}") from None
    with zf:
        names = zf.namelist()
        pkls = [n for n in names if n.endswith("/data.pkl")]
        if len(pkls) != 1:
            raise CheckpointError(
                f"expected exactly one data.pkl in the archive, found {pkls}")
        stem = pkls[0][:-len("data.pkl")]
        storages = {}
        for n in names:
            if n.startswith(stem + "data/"):
                storages[n[len(stem) + len("data/"):]] = zf.read(n)
        obj = _RestrictedUnpickler(io.BytesIO(zf.read(pkls[0])),
                                   storages).load()

    # a checkpoint often wraps the weights under a well-known key;
    # siblings left behind by the descent are reported, not lost
    skipped: list[str] = []
    seen = 0
    while isinstance(obj, dict) and seen < 4:
        inner = [k for k in _WRAPPER_KEYS
                 if isinstance(obj.get(k), dict)]
        if not inner:
            break
        skipped.extend(str(k) for k in obj if k != inner[0])
        obj = obj[inner[0]]
        seen += 1
    if not isinstance(obj, dict):
        raise CheckpointError(
            f"checkpoint root is {type(obj).__name__}, expected a dict")

    tensors: dict[str, np.ndarray] = {}
    for key, value in obj.items():
        if isinstance(value, np.ndarray):
            tensors[str(key)] = value
        else:
            skipped.append(str(key))
    if not tensors:
        raise CheckpointError("checkpoint holds no tensors")
    return tensors, skipped
