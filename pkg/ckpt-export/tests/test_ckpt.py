"""Checkpoint reader against synthetic archives."""

import io
import pickle
import zipfile

import numpy as np
import pytest

from ckpt_export import CheckpointError, load_checkpoint
from fixtures import save_checkpoint


def rand_tree(seed=0):
    rng = np.random.default_rng(seed)
    return {
        "enc.conv.weight": rng.standard_normal((4, 3, 5, 5)).astype(np.float32),
        "enc.conv.bias": rng.standard_normal(4).astype(np.float32),
        "head.proj": rng.standard_normal((8, 8)).astype(np.float32),
    }


class TestHappyPath:
    def test_flat_roundtrip(self, tmp_path):
        tree = rand_tree()
        path = tmp_path / "flat.pth"
        save_checkpoint(path, tree)
        tensors, skipped = load_checkpoint(path)
        assert set(tensors) == set(tree)
        assert skipped == []
        for name, arr in tree.items():
            got = tensors[name]
            assert got.dtype == arr.dtype and got.shape == arr.shape
            assert got.tobytes() == arr.tobytes()

    def test_wrapped_state_dict(self, tmp_path):
        path = tmp_path / "wrapped.pth"
        save_checkpoint(path, rand_tree(), wrapper="state_dict")
        tensors, skipped = load_checkpoint(path)
        assert set(tensors) == set(rand_tree())
        assert "epoch" in skipped       # the sibling left behind is reported

    def test_non_tensor_leaves_reported(self, tmp_path):
        tree = dict(rand_tree(), note="hi", count=7)
        path = tmp_path / "mixed.pth"
        save_checkpoint(path, tree)
        tensors, skipped = load_checkpoint(path)
        assert set(skipped) == {"note", "count"}
        assert set(tensors) == set(rand_tree())

    def test_other_dtypes_come_through(self, tmp_path):
        tree = {
            "d": np.arange(4, dtype=np.float64),
            "l": np.arange(4, dtype=np.int64),
            "h": np.arange(4, dtype=np.float16),
        }
        path = tmp_path / "dtypes.pth"
        save_checkpoint(path, tree)
        tensors, _ = load_checkpoint(path)
        for name, arr in tree.items():
            assert tensors[name].dtype == arr.dtype
            assert tensors[name].tobytes() == arr.tobytes()


class TestRejection:
    def test_not_a_zip(self, tmp_path):
        path = tmp_path / "junk.pth"
        path.write_bytes(b"this is not an archive")
        with pytest.raises(CheckpointError, match="cannot open"):
            load_checkpoint(path)

    def test_no_data_pkl(self, tmp_path):
        path = tmp_path / "empty.pth"
        with zipfile.ZipFile(path, "w") as zf:
            zf.writestr("archive/version", "3\n")
        with pytest.raises(CheckpointError, match="data.pkl"):
            load_checkpoint(path)

    def test_disallowed_global(self, tmp_path):
        path = tmp_path / "evil.pth"
        with zipfile.ZipFile(path, "w") as zf:
            zf.writestr("archive/data.pkl",
                        pickle.dumps({"x": io.BytesIO}))
        with pytest.raises(CheckpointError, match="disallowed global"):
            load_checkpoint(path)

    def test_missing_storage_entry(self, tmp_path):
        path = tmp_path / "gap.pth"
        save_checkpoint(path, rand_tree())
        # rebuild the zip without one storage file
        src = zipfile.ZipFile(path)
        victim = tmp_path / "gap2.pth"
        with zipfile.ZipFile(victim, "w") as zf:
            for name in src.namelist():
                if name != "archive/data/0":
                    zf.writestr(name, src.read(name))
        src.close()
        with pytest.raises(CheckpointError, match="missing from archive"):
            load_checkpoint(victim)

    def test_no_tensors(self, tmp_path):
        path = tmp_path / "none.pth"
        save_checkpoint(path, {"just": "strings"})
        with pytest.raises(CheckpointError, match="no tensors"):
            load_checkpoint(path)

    def test_root_not_a_dict(self, tmp_path):
        path = tmp_path / "list.pth"
        with zipfile.ZipFile(path, "w") as zf:
            zf.writestr("archive/data.pkl", pickle.dumps([1, 2, 3]))
        with pytest.raises(CheckpointError, match="expected a dict"):
            load_checkpoint(path)


class TestStridedRebuild:
    def test_offset_and_stride_resolved(self, tmp_path):
        # hand-build a rebuild call with a transposed, offset view
        import fixtures as fx

        path = tmp_path / "strided.pth"
        base = np.arange(12, dtype=np.float32)
        with fx._fake_framework() as (torch, utils):
            storage = fx._Storage(torch.FloatStorage, "0", base.size)
            buf = io.BytesIO()
            pickler = fx._CheckpointPickler(buf, protocol=2)

            class _View:
                pass
            view = _View()
            pickler.dispatch_table = {
                _View: lambda v: (utils._rebuild_tensor_v2,
                                  (storage, 2, (2, 3), (1, 3), False, {})),
            }
            pickler.dump({"v": view})
            pkl = buf.getvalue()
        with zipfile.ZipFile(path, "w") as zf:
            zf.writestr("archive/data.pkl", pkl)
            zf.writestr("archive/data/0", base.tobytes())

        tensors, _ = load_checkpoint(path)
        got = tensors["v"]
        assert got.shape == (2, 3)
        want = np.array([[base[2 + i + 3 * j] for j in range(3)]
                         for i in range(2)])
        assert np.array_equal(got, want)
        assert got.flags["C_CONTIGUOUS"]

    def test_overrun_rejected(self, tmp_path):
        import fixtures as fx

        path = tmp_path / "overrun.pth"
        base = np.arange(4, dtype=np.float32)
        with fx._fake_framework() as (torch, utils):
            storage = fx._Storage(torch.FloatStorage, "0", base.size)
            buf = io.BytesIO()
            pickler = fx._CheckpointPickler(buf, protocol=2)

            class _View:
                pass
            pickler.dispatch_table = {
                _View: lambda v: (utils._rebuild_tensor_v2,
                                  (storage, 0, (5,), (1,), False, {})),
            }
            pickler.dump({"v": _View()})
            pkl = buf.getvalue()
        with zipfile.ZipFile(path, "w") as zf:
            zf.writestr("archive/data.pkl", pkl)
            zf.writestr("archive/data/0", base.tobytes())
        with pytest.raises(CheckpointError, match="overruns"):
            load_checkpoint(path)
