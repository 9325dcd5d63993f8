#!/usr/bin/env python3
"""Write the deterministic desk-scale extractor weights as a container file.

The trainer can already synthesize these in process (--extractor-weights
tiny); this script materializes the same tensors on disk so the container
loading path gets exercised end to end, and so other tools can consume
the weights.
"""

import argparse
import sys

sys.path.insert(0, "src")

from fanorm.container import save_container
from fanorm.extractor import tiny_spec


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("out", help="output container path (e.g. tiny.fanc)")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    spec, weights = tiny_spec(args.seed)
    entries = [(name, weights[name]) for name in weights]
    save_container(entries, args.out)
    layers = ", ".join(layer.name for layer in spec.conv_layers())
    print(f"wrote {args.out}: {len(entries)} entries ({layers})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
