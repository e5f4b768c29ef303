#!/usr/bin/env python3
"""Convert the 5000-image MNIST sample bundled with the mlxtend wheel to IDX files.

Writes train-{images-idx3,labels-idx1}-ubyte (400 images per class) and
t10k-{images-idx3,labels-idx1}-ubyte (100 per class) into the output directory.

    pip download mlxtend --no-deps -d /tmp/mlx
    python3 tools/extract_mnist_subset.py /tmp/mlx/mlxtend-*.whl data/mnist5k
"""
import argparse
import gzip
import pathlib
import random
import struct
import zipfile


def write_idx(path, images, labels):
    with open(path.with_name(path.name.format(kind="images-idx3")), "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))
    with open(path.with_name(path.name.format(kind="labels-idx1")), "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("wheel")
    parser.add_argument("out_dir")
    parser.add_argument("--seed", type=int, default=20240101)
    args = parser.parse_args()

    raw = zipfile.ZipFile(args.wheel).read("mlxtend/data/data/mnist_5k.csv.gz")
    rows = [list(map(int, line.split(","))) for line in gzip.decompress(raw).decode().splitlines()]
    by_class = {}
    for row in rows:
        by_class.setdefault(row[-1], []).append(row[:-1])

    train, test = [], []
    for label in sorted(by_class):
        samples = by_class[label]
        train += [(img, label) for img in samples[:400]]
        test += [(img, label) for img in samples[400:]]
    rng = random.Random(args.seed)
    rng.shuffle(train)
    rng.shuffle(test)

    out = pathlib.Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_idx(out / "train-{kind}-ubyte", [i for i, _ in train], [l for _, l in train])
    write_idx(out / "t10k-{kind}-ubyte", [i for i, _ in test], [l for _, l in test])
    print(f"wrote {len(train)} train / {len(test)} test images to {out}")


if __name__ == "__main__":
    main()
