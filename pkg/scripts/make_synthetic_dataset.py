#!/usr/bin/env python3
"""Generate a seeded synthetic tissue dataset as PNG files."""

import argparse
import sys

sys.path.insert(0, "src")

from fanorm.synthetic import write_dataset


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("out_dir")
    parser.add_argument("--count", type=int, default=200)
    parser.add_argument("--seed", type=int, default=100)
    parser.add_argument("--size", type=int, default=64)
    args = parser.parse_args(argv)

    paths = write_dataset(args.out_dir, args.seed, args.count, args.size)
    print(f"wrote {len(paths)} images ({args.size}x{args.size}) to {args.out_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
