"""The two operations: convert a checkpoint, verify the result.

Both yield a stream of event dicts (one JSON line each on the CLI) and
both hold the same line: every demanded canonical name filled exactly
once, shapes exact, values bit-identical. Conversion is a relabeling of
float32 data; nothing is scaled, cast, or approximated.
"""

import numpy as np

from .ckpt import load_checkpoint
from .demand import Profile, roster
from .errors import MissingParameter, ShapeMismatch, VerifyError
from .namemap import NameMap
from .tlwt import file_checksum, model_hash, read_tlwt, write_tlwt


def _mapped_checkpoint(ckpt_path, name_map: NameMap, events: list):
    tensors, skipped = load_checkpoint(ckpt_path)
    for key in skipped:
        events.append({"event": "skipped", "src": key, "why": "not a tensor"})
    mapped, map_events = name_map.map_tensors(tensors)
    events.extend(map_events)
    return mapped


def _check_against_demand(mapped: dict, demand: dict, events: list):
    """Exact coverage: no missing, no extra, shapes and dtype exact."""
    missing = [n for n in demand if n not in mapped]
    for n in missing:
        events.append({"event": "missing", "name": n,
                       "shape": list(demand[n])})
    extra = [n for n in mapped if n not in demand]
    for n in extra:
        events.append({"event": "extra", "name": n})
    if missing:
        raise MissingParameter(
            f"{len(missing)} demanded parameters unfilled, first: {missing[0]}")
    if extra:
        raise ShapeMismatch(
            f"{len(extra)} mapped names not in the demand roster, "
            f"first: {extra[0]}")
    for name, want in demand.items():
        arr = mapped[name]
        if tuple(arr.shape) != tuple(want):
            raise ShapeMismatch(
                f"{name}: checkpoint gives {tuple(arr.shape)}, "
                f"demand is {tuple(want)}")
        if arr.dtype != np.float32:
            raise ShapeMismatch(
                f"{name}: dtype {arr.dtype}, only float32 converts losslessly")
    sigma = mapped["fm.sigma"]
    if not (sigma > 0).all():
        raise ShapeMismatch(
            "fm.sigma: must be strictly positive, the codec will refuse it")


def convert(ckpt_path, profile: Profile, name_map: NameMap,
            events: list | None = None) -> bytes:
    """Checkpoint -> weight-file bytes, appending report events.

    Raises MissingParameter or ShapeMismatch (after recording per-name
    events) when the checkpoint cannot fill the profile's roster.
    """
    events = events if events is not None else []
    demand = roster(profile)
    mapped = _mapped_checkpoint(ckpt_path, name_map, events)
    _check_against_demand(mapped, demand, events)
    ordered = {name: mapped[name] for name in demand}
    blob = write_tlwt(profile.to_text(), ordered)
    crc = file_checksum(blob)
    events.append({
        "event": "converted",
        "tensors": len(ordered),
        "parameters": int(sum(a.size for a in ordered.values())),
        "bytes": len(blob),
        "checksum": f"{crc:08x}",
        "model_hash": f"{model_hash(profile.to_text(), crc):016x}",
    })
    return blob


def verify(tlwt_data: bytes, ckpt_path, profile: Profile, name_map: NameMap,
           events: list | None = None) -> None:
    """Prove a weight file is the lossless relabel of a checkpoint.

    Reading the file enforces its checksum, so corruption surfaces here
    as ChecksumMismatch. Past that, the tensor set must equal the
    profile's demand roster and every value must match bit-for-bit
    (max abs diff exactly 0).
    """
    events = events if events is not None else []
    profile_text, stored = read_tlwt(tlwt_data)
    if profile_text != profile.to_text():
        raise VerifyError("weight file carries a different profile")
    demand = roster(profile)
    mapped = _mapped_checkpoint(ckpt_path, name_map, events)
    _check_against_demand(mapped, demand, events)
    if set(stored) != set(demand):
        raise VerifyError(
            f"weight file holds {len(stored)} tensors, demand roster "
            f"has {len(demand)}, sets differ")
    for name, want in mapped.items():
        got = stored[name]
        if got.shape != want.shape:
            raise VerifyError(f"{name}: file shape {got.shape} != "
                              f"checkpoint {want.shape}")
        if got.tobytes() != want.tobytes():
            diff = float(np.abs(got.astype(np.float64) -
                                want.astype(np.float64)).max())
            events.append({"event": "diff", "name": name,
                           "max_abs_diff": diff})
            raise VerifyError(f"{name}: values differ, max abs diff {diff}")
    events.append({
        "event": "verified",
        "tensors": len(stored),
        "demand": len(demand),
        "max_abs_diff": 0.0,
        "checksum": f"{file_checksum(tlwt_data):08x}",
    })
