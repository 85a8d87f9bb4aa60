#!/usr/bin/env python3
"""Convert Indian Pines MAT files into the esmhc cube and label containers.

    convert_indian_pines.py --cube Indian_pines_corrected.mat --labels Indian_pines_gt.mat \
        --wavelengths wavelengths.txt --out data/indian_pines

The wavelength file lists one band centre (nm) per band, whitespace or comma
separated, ascending. The MAT files carry no sensor metadata, so it is required.
"""

import argparse
import json
import struct
import sys
from pathlib import Path

import numpy as np
import scipy.io


def load_mat_array(path, key):
    data = scipy.io.loadmat(path)
    if key:
        if key not in data:
            sys.exit(f"{path}: no variable '{key}' (have {sorted(k for k in data if not k.startswith('__'))})")
        return np.asarray(data[key])
    arrays = [v for k, v in data.items() if not k.startswith("__") and isinstance(v, np.ndarray)]
    if len(arrays) != 1:
        sys.exit(f"{path}: expected exactly one array variable, pass --cube-key/--labels-key")
    return arrays[0]


def read_wavelengths(path):
    text = Path(path).read_text().replace(",", " ")
    return np.array([float(t) for t in text.split()], dtype=np.float64)


def write_sidecar(path, meta):
    Path(str(path) + ".json").write_text(json.dumps(meta, indent=2) + "\n")


def write_cube(path, cube, wavelengths):
    h, w, c = cube.shape
    with open(path, "wb") as f:
        f.write(b"HSICUBE1")
        f.write(struct.pack("<III", h, w, c))
        f.write(wavelengths.astype("<f8").tobytes())
        f.write(np.ascontiguousarray(cube, dtype="<f4").tobytes())
    write_sidecar(path, {"kind": "hsi_cube", "height": h, "width": w, "bands": c,
                         "wavelength_first_nm": float(wavelengths[0]),
                         "wavelength_last_nm": float(wavelengths[-1])})


def write_labels(path, labels, classes, names):
    h, w = labels.shape
    with open(path, "wb") as f:
        f.write(b"HSILBL01")
        f.write(struct.pack("<III", h, w, classes))
        f.write(np.ascontiguousarray(labels, dtype="<u2").tobytes())
    write_sidecar(path, {"kind": "hsi_labels", "height": h, "width": w, "classes": classes,
                         "class_names": names})


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cube", required=True, help="MAT file with the H x W x C cube")
    ap.add_argument("--labels", required=True, help="MAT file with the H x W ground truth (0 = unlabeled)")
    ap.add_argument("--wavelengths", required=True, help="text file with one centre wavelength per band")
    ap.add_argument("--class-names", help="text file, one class name per line")
    ap.add_argument("--cube-key")
    ap.add_argument("--labels-key")
    ap.add_argument("--out", required=True, help="output directory (cube.hsi, labels.lbl)")
    args = ap.parse_args()

    cube = load_mat_array(args.cube, args.cube_key).astype(np.float32)
    labels = load_mat_array(args.labels, args.labels_key).astype(np.int64)
    wavelengths = read_wavelengths(args.wavelengths)

    if cube.ndim != 3:
        sys.exit(f"cube must be H x W x C, got shape {cube.shape}")
    if labels.shape != cube.shape[:2]:
        sys.exit(f"labels shape {labels.shape} does not match cube {cube.shape[:2]}")
    if len(wavelengths) != cube.shape[2]:
        sys.exit(f"{len(wavelengths)} wavelengths for {cube.shape[2]} bands")
    if np.any(np.diff(wavelengths) <= 0):
        sys.exit("wavelengths must be strictly increasing")
    if not np.all(np.isfinite(cube)):
        sys.exit("cube contains non-finite values")
    if labels.min() < 0 or labels.max() > 65535:
        sys.exit("labels out of u16 range")

    classes = int(labels.max())
    names = []
    if args.class_names:
        names = [l.strip() for l in Path(args.class_names).read_text().splitlines() if l.strip()]
        if len(names) != classes:
            sys.exit(f"{len(names)} class names for {classes} classes")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_cube(out / "cube.hsi", cube, wavelengths)
    write_labels(out / "labels.lbl", labels, classes, names)
    print(f"wrote {out / 'cube.hsi'} {cube.shape} and {out / 'labels.lbl'} ({classes} classes)")


if __name__ == "__main__":
    main()
