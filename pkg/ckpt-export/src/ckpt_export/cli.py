"""Command line: convert by default, --verify to check, --dry-run to map.

Every run writes a JSON-lines report to stdout, one event per line,
ending with a summary line whose `ok` field matches the exit status.
Exit codes: 0 success, 1 conversion or verification failure, 2 unusable
input or arguments.
"""

import argparse
import json
import sys

from .convert import _check_against_demand, _mapped_checkpoint, convert, verify
from .demand import named_profile, roster
from .errors import (
    CheckpointError,
    ChecksumMismatch,
    ExportError,
    ManifestError,
    WeightFormatError,
)
from .namemap import NameMap


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="ckpt-export",
        description="Convert a training checkpoint into a .tlwt weight file.")
    p.add_argument("--ckpt", required=True, help="checkpoint archive to read")
    p.add_argument("--profile", default="default",
                   help="architecture profile (default, tiny)")
    p.add_argument("--out", help="output .tlwt path (required to convert)")
    p.add_argument("--map", default="reference", dest="name_map",
                   help="bundled manifest name (identity, reference) or a "
                        "path to a manifest JSON")
    p.add_argument("--verify", metavar="TLWT",
                   help="instead of converting, check this .tlwt against "
                        "the checkpoint")
    p.add_argument("--dry-run", action="store_true",
                   help="map and report only, write nothing")
    return p


def _emit(event: dict) -> None:
    print(json.dumps(event, sort_keys=True))


def _load_map(name_or_path: str) -> NameMap:
    if name_or_path.endswith(".json"):
        return NameMap.from_file(name_or_path)
    return NameMap.bundled(name_or_path)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    events: list[dict] = []
    try:
        profile = named_profile(args.profile)
        name_map = _load_map(args.name_map)
        if args.verify is not None:
            with open(args.verify, "rb") as f:
                data = f.read()
            verify(data, args.ckpt, profile, name_map, events)
            summary = {"event": "summary", "ok": True, "action": "verify"}
        elif args.dry_run:
            mapped = _mapped_checkpoint(args.ckpt, name_map, events)
            _check_against_demand(mapped, roster(profile), events)
            summary = {"event": "summary", "ok": True, "action": "dry-run",
                       "tensors": len(mapped)}
        else:
            if not args.out:
                build_parser().error("--out is required to convert")
            blob = convert(args.ckpt, profile, name_map, events)
            with open(args.out, "wb") as f:
                f.write(blob)
            summary = {"event": "summary", "ok": True, "action": "convert",
                       "out": args.out}
    except ChecksumMismatch as e:
        # a corrupt weight file is a failed verification, not bad usage
        for ev in events:
            _emit(ev)
        _emit({"event": "summary", "ok": False, "error": str(e),
               "kind": type(e).__name__})
        return 1
    except (CheckpointError, ManifestError, WeightFormatError, OSError) as e:
        for ev in events:
            _emit(ev)
        _emit({"event": "summary", "ok": False, "error": str(e),
               "kind": type(e).__name__})
        return 2
    except ExportError as e:
        for ev in events:
            _emit(ev)
        _emit({"event": "summary", "ok": False, "error": str(e),
               "kind": type(e).__name__})
        return 1
    for ev in events:
        _emit(ev)
    _emit(summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
