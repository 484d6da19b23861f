#!/usr/bin/env python3
# Copyright 2026 The bsvae Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Builds an IDX image file from the 10k MNIST digits bundled in the npm `mnist` package.

The package stores each pixel as byte/255 rounded to three decimals, which maps
back to the original byte exactly. Digits are interleaved (0,1,...,9,0,1,...) so
that any prefix of the file is class-balanced.

Usage: make_mnist_subset.py <unpacked npm package dir> <output dir>
"""
import json
import pathlib
import struct
import sys


def main() -> int:
    if len(sys.argv) != 3:
        print(__doc__, file=sys.stderr)
        return 2
    pkg = pathlib.Path(sys.argv[1])
    out = pathlib.Path(sys.argv[2])
    digits = []
    for d in range(10):
        flat = json.loads((pkg / "src" / "digits" / f"{d}.json").read_text())["data"]
        if len(flat) % 784:
            raise SystemExit(f"digit {d}: {len(flat)} values is not a multiple of 784")
        digits.append([flat[i:i + 784] for i in range(0, len(flat), 784)])

    images = []
    for i in range(max(len(d) for d in digits)):
        for d in digits:
            if i < len(d):
                images.append(d[i])

    payload = bytearray()
    for img in images:
        for v in img:
            b = round(v * 255)
            if not 0 <= b <= 255 or abs(b / 255 - v) > 5e-4:
                raise SystemExit(f"pixel value {v} does not map to a byte")
            payload.append(b)

    out.mkdir(parents=True, exist_ok=True)
    path = out / "train-images-idx3-ubyte"
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        f.write(payload)
    print(f"wrote {len(images)} images to {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
