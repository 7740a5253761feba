import argparse
import sys

from .convert import DATASETS, ConversionError, RawPlanetoidBundle, convert


def build_parser():
    parser = argparse.ArgumentParser(
        prog="planetoid-convert",
        description="Convert raw citation-benchmark files into the portable "
        "bundle format",
    )
    sub = parser.add_subparsers(dest="verb", required=True)
    p = sub.add_parser("convert", help="convert one dataset")
    p.add_argument("--raw-dir", required=True,
                   help="directory holding the ind.<name>.* files")
    p.add_argument("--name", required=True, choices=DATASETS)
    p.add_argument("--out", required=True, help="output bundle directory")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    raw = RawPlanetoidBundle(args.raw_dir, args.name)
    try:
        stats = convert(raw, args.out)
    except (ConversionError, OSError) as exc:
        print(f"conversion failed: {exc}", file=sys.stderr)
        return 1
    print(
        f"{stats['name']}: {stats['nodes']} nodes, {stats['edges']} edges, "
        f"{stats['feature_dims']} feature dims, {stats['classes']} classes, "
        f"{stats['zero_feature_nodes']} zero-feature nodes"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
