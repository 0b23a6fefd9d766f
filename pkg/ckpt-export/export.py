#!/usr/bin/env python3
"""Entry point: `export.py --ckpt path --profile default --out model.tlwt`."""

import sys

from ckpt_export.cli import main

if __name__ == "__main__":
    sys.exit(main())
