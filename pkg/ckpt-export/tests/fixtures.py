"""Synthetic checkpoint archives for tests, written without the training
framework installed.

`save_checkpoint` reproduces the framework's zip layout: a pickle at
`archive/data.pkl` whose tensors are rebuild calls carrying persistent
storage ids, plus one `archive/data/<key>` entry per storage. The pickle
comes from the standard pickler against stand-in classes registered
under the framework's module names for the duration of the call, so the
bytes look exactly like the real thing to any reader.
"""

import contextlib
import io
import pickle
import sys
import types
import zipfile

import numpy as np

_STORAGE_CLASSES = {
    "f4": "FloatStorage",
    "f8": "DoubleStorage",
    "f2": "HalfStorage",
    "i8": "LongStorage",
    "i4": "IntStorage",
    "u1": "ByteStorage",
}


class _Storage:
    """Pickles as a persistent id, exactly like a saved storage."""

    def __init__(self, cls, key: str, numel: int):
        self.cls = cls
        self.key = key
        self.numel = numel


class _Tensor:
    """Pickles as a rebuild call referencing its storage."""

    def __init__(self, array: np.ndarray, storage: _Storage):
        self.array = array
        self.storage = storage


@contextlib.contextmanager
def _fake_framework():
    """Temporarily register torch stand-ins so pickle can emit its globals."""
    saved = {name: sys.modules.get(name) for name in ("torch", "torch._utils")}
    torch = types.ModuleType("torch")
    utils = types.ModuleType("torch._utils")

    def _rebuild_tensor_v2(*args):
        raise RuntimeError("fixture stub, never called")
    _rebuild_tensor_v2.__module__ = "torch._utils"
    _rebuild_tensor_v2.__qualname__ = "_rebuild_tensor_v2"
    utils._rebuild_tensor_v2 = _rebuild_tensor_v2
    for cls_name in set(_STORAGE_CLASSES.values()):
        setattr(torch, cls_name, type(cls_name, (), {"__module__": "torch"}))
    torch._utils = utils
    sys.modules["torch"] = torch
    sys.modules["torch._utils"] = utils
    try:
        yield torch, utils
    finally:
        for name, mod in saved.items():
            if mod is None:
                del sys.modules[name]
            else:
                sys.modules[name] = mod


class _CheckpointPickler(pickle.Pickler):
    def persistent_id(self, obj):
        if isinstance(obj, _Storage):
            return ("storage", obj.cls, obj.key, "cpu", obj.numel)
        return None


def _contiguous_strides(shape):
    strides, acc = [], 1
    for dim in reversed(shape):
        strides.append(acc)
        acc *= dim
    return tuple(reversed(strides))


def save_checkpoint(path, tree, wrapper: str | None = None) -> None:
    """Write `tree` (flat dict name -> ndarray or plain value) as a
    checkpoint zip; `wrapper` nests the dict under that key plus an
    `epoch` sibling, the way training scripts usually save."""
    with _fake_framework() as (torch, utils):
        storages: dict[str, bytes] = {}
        payload = {}
        for i, (name, value) in enumerate(tree.items()):
            if isinstance(value, np.ndarray):
                arr = np.ascontiguousarray(value)
                le = arr.dtype.newbyteorder("<")
                cls = getattr(torch, _STORAGE_CLASSES[le.str[1:]])
                key = str(i)
                storages[key] = arr.astype(le).tobytes()
                payload[name] = _Tensor(arr, _Storage(cls, key, arr.size))
            else:
                payload[name] = value
        if wrapper is not None:
            payload = {wrapper: payload, "epoch": 3}

        buf = io.BytesIO()
        pickler = _CheckpointPickler(buf, protocol=2)

        def reduce_tensor(t: _Tensor):
            return (utils._rebuild_tensor_v2,
                    (t.storage, 0, tuple(t.array.shape),
                     _contiguous_strides(t.array.shape), False, {}))
        pickler.dispatch_table = {_Tensor: reduce_tensor}
        pickler.dump(payload)
        pkl = buf.getvalue()

    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        zf.writestr("archive/data.pkl", pkl)
        for key, raw in storages.items():
            zf.writestr(f"archive/data/{key}", raw)
        zf.writestr("archive/version", "3\n")
