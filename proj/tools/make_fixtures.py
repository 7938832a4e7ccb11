#!/usr/bin/env python3
# Copyright 2026 The OodSeg Authors. All Rights Reserved.
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
# ==============================================================================
"""Regenerates the bundled fixtures.

Inputs are drawn with numpy from a fixed seed. When --cli points at a built
`oodseg` binary, the expected outputs of the parity battery are frozen by
running that binary.

  python3 tools/make_fixtures.py --root . --cli build/tools/oodseg
"""

import argparse
import pathlib
import shutil
import subprocess

import numpy as np
from PIL import Image

METHODS = ("msp", "energy", "entropy", "eel")
CLASS_COUNTS = (2, 5, 19)


def save_png(path, array):
    Image.fromarray(np.asarray(array, dtype=np.uint8), mode="L").save(path)


def eval4(root):
    base = root / "data" / "fixtures" / "eval4"
    (base / "scores").mkdir(parents=True, exist_ok=True)
    (base / "labels").mkdir(parents=True, exist_ok=True)
    np.save(base / "scores" / "fixture.npy", np.array([[0.9, 0.8], [0.7, 0.6]]))
    save_png(base / "labels" / "fixture.png", [[1, 0], [1, 0]])


def parity_inputs(root):
    base = root / "data" / "fixtures" / "parity"
    for sub in ("logits", "reference", "masks", "maskwise"):
        (base / sub).mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(20260412)
    for c in CLASS_COUNTS:
        stem = f"c{c:02d}"
        np.save(base / "logits" / f"{stem}.npy", rng.uniform(-3, 3, (c, 4, 5)))
        np.save(base / "reference" / f"{stem}.npy", rng.uniform(-3, 3, (c, 4, 5)))
        codes = rng.choice(np.array([0, 1, 255], dtype=np.uint8), size=(4, 5),
                           p=[0.6, 0.3, 0.1])
        codes[0, 0], codes[0, 1] = 0, 1
        save_png(base / "masks" / f"{stem}.png", codes)
    np.save(base / "maskwise" / "m03.masks.npy", rng.normal(0, 2, (3, 4, 5)))
    np.save(base / "maskwise" / "m03.classes.npy", rng.normal(0, 2, (3, 5)))


def freeze_expected(root, cli):
    base = root / "data" / "fixtures" / "parity"
    expected = base / "expected"
    if expected.exists():
        shutil.rmtree(expected)
    for method in METHODS:
        subprocess.run([cli, "score", str(base / "logits"), "--method", method,
                        "--out", str(expected / method)], check=True)
    subprocess.run([cli, "score", str(base / "maskwise"), "--method",
                    "maskwise", "--out", str(expected / "maskwise")], check=True)
    subprocess.run([cli, "eval", str(expected / "eel"), "--labels",
                    str(base / "masks"), "--curve", "--out",
                    str(expected / "eval")], check=True)


def npy_fixture(root):
    base = root / "tests" / "data"
    base.mkdir(parents=True, exist_ok=True)
    np.save(base / "arange_19x8x8.npy",
            (np.arange(19 * 8 * 8, dtype=np.float64) / 7.0).reshape(19, 8, 8))


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--root", type=pathlib.Path, default=pathlib.Path("."))
    parser.add_argument("--cli", help="built oodseg binary for expected outputs")
    args = parser.parse_args()
    eval4(args.root)
    parity_inputs(args.root)
    npy_fixture(args.root)
    if args.cli:
        freeze_expected(args.root, args.cli)


if __name__ == "__main__":
    main()
