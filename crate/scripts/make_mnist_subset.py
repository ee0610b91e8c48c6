"""Build a small MNIST subset in IDX format from the `mnist` npm package.

Usage: python3 scripts/make_mnist_subset.py <path/to/npm/mnist/package> <out-dir>

The npm package ships 10000 MNIST digits as JSON (one file per class, pixels
scaled to [0, 1] with three decimals). We take 100 training and 20 test
images per class, interleave them deterministically and write the four
standard IDX files.
"""
import json
import random
import struct
import sys
from pathlib import Path

TRAIN_PER_CLASS = 100
TEST_PER_CLASS = 20


def write_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(bytes(min(255, max(0, round(v * 255))) for v in img))


def write_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    pkg, out = Path(sys.argv[1]), Path(sys.argv[2])
    out.mkdir(parents=True, exist_ok=True)
    train, test = [], []
    for digit in range(10):
        data = json.loads((pkg / "src" / "digits" / f"{digit}.json").read_text())["data"]
        samples = [data[i * 784:(i + 1) * 784] for i in range(len(data) // 784)]
        train += [(s, digit) for s in samples[:TRAIN_PER_CLASS]]
        test += [(s, digit) for s in samples[TRAIN_PER_CLASS:TRAIN_PER_CLASS + TEST_PER_CLASS]]
    rng = random.Random(0)
    rng.shuffle(train)
    rng.shuffle(test)
    write_images(out / "train-images-idx3-ubyte", [s for s, _ in train])
    write_labels(out / "train-labels-idx1-ubyte", [d for _, d in train])
    write_images(out / "t10k-images-idx3-ubyte", [s for s, _ in test])
    write_labels(out / "t10k-labels-idx1-ubyte", [d for _, d in test])


if __name__ == "__main__":
    main()
