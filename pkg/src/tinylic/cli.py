"""Command-line front end.

Subcommands: enc, dec, inspect, metrics, selftest. Exit codes: 0 on
success, 2 for malformed inputs or files, 3 when a bitstream was produced
by different weights than the ones loaded, 4 for corrupt payload data.
"""

from __future__ import annotations

import argparse
import json
import sys

from .codec import (
    Codec,
    decode_image,
    encode_image,
    j_cost,
    mse_unit,
    ms_ssim,
    psnr,
    read_ppm,
    write_ppm,
)
from .container import LAMBDA_LEVELS, inspect_container, read_container
from .errors import (
    DecodeError,
    FormatError,
    MinSizeError,
    ModelMismatch,
    TinylicError,
)
from .selftest import run_selftest
from .weights import read_weights


def _load_codec(path: str) -> Codec:
    return Codec.from_store(read_weights(path))


def _cmd_enc(args) -> int:
    img = read_ppm(args.input)
    codec = _load_codec(args.weights)
    data = encode_image(img, codec, lambda_index=args.quality)
    with open(args.output, "wb") as f:
        f.write(data)
    c = read_container(data)
    print(f"{args.output}: {len(data)} bytes, {c.bpp():.4f} bpp, "
          f"quality {args.quality}, {img.width}x{img.height}")
    return 0


def _cmd_dec(args) -> int:
    with open(args.input, "rb") as f:
        data = f.read()
    codec = _load_codec(args.weights)
    img = decode_image(data, codec, stages=args.stages)
    write_ppm(img, args.output)
    suffix = "" if args.stages is None else f" (stages {args.stages})"
    print(f"{args.output}: {img.width}x{img.height}{suffix}")
    return 0


def _cmd_inspect(args) -> int:
    with open(args.input, "rb") as f:
        data = f.read()
    print(json.dumps(inspect_container(data), indent=2))
    return 0


def _cmd_metrics(args) -> int:
    ref = read_ppm(args.ref)
    test = read_ppm(args.test)
    out = {"psnr": psnr(ref, test), "mse": mse_unit(ref, test)}
    try:
        out["ms_ssim"] = ms_ssim(ref, test)
    except MinSizeError:
        out["ms_ssim"] = None
    if args.container is not None:
        with open(args.container, "rb") as f:
            c = read_container(f.read())
        idx = args.lambda_index if args.lambda_index is not None else c.lambda_index
        out["bpp"] = c.bpp()
        out["lambda_index"] = idx
        out["j"] = j_cost(c.bpp(), out["mse"], idx)
    print(json.dumps(out, indent=2))
    return 0


def _cmd_selftest(args) -> int:
    ok = run_selftest(args.seed)
    print("selftest passed" if ok else "selftest FAILED")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tinylic",
        description="Learned image codec: encode, decode, inspect, measure.")
    sub = parser.add_subparsers(dest="command", required=True)

    enc = sub.add_parser("enc", help="compress a PPM image")
    enc.add_argument("-i", "--input", required=True, help="input image (binary PPM)")
    enc.add_argument("-w", "--weights", required=True, help="weight file (.tlwt)")
    enc.add_argument("-q", "--quality", type=int, default=0, metavar="0..7",
                     choices=range(LAMBDA_LEVELS),
                     help="rate-distortion point, 0 lowest rate")
    enc.add_argument("-o", "--output", required=True, help="output bitstream (.tlic)")
    enc.set_defaults(fn=_cmd_enc)

    dec = sub.add_parser("dec", help="decompress a bitstream")
    dec.add_argument("-i", "--input", required=True, help="input bitstream (.tlic)")
    dec.add_argument("-w", "--weights", required=True, help="weight file (.tlwt)")
    dec.add_argument("-o", "--output", required=True, help="output image (binary PPM)")
    dec.add_argument("--stages", type=int, default=None, metavar="1..4",
                     help="decode only the first k channel groups")
    dec.set_defaults(fn=_cmd_dec)

    ins = sub.add_parser("inspect", help="print container header and rate split")
    ins.add_argument("-i", "--input", required=True, help="bitstream (.tlic)")
    ins.set_defaults(fn=_cmd_inspect)

    met = sub.add_parser("metrics", help="distortion (and rate, given a container)")
    met.add_argument("--ref", required=True, help="reference image (binary PPM)")
    met.add_argument("--test", required=True, help="test image (binary PPM)")
    met.add_argument("--container", default=None,
                     help="matching bitstream, enables bpp and J")
    met.add_argument("--lambda-index", type=int, default=None, metavar="0..7",
                     help="override the container's trade-off index for J")
    met.set_defaults(fn=_cmd_metrics)

    self_p = sub.add_parser("selftest", help="run the seeded property suite")
    self_p.add_argument("--seed", type=int, default=0)
    self_p.set_defaults(fn=_cmd_selftest)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ModelMismatch as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except DecodeError as e:
        print(f"error: {e}", file=sys.stderr)
        return 4
    except FormatError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except TinylicError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
