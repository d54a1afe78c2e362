"""File formats: PGM images (8/16-bit), flat CSV images, measurement CSVs,
and JSON run manifests with a content hash."""

from __future__ import annotations

import csv
import hashlib
import json

import numpy as np


def write_pgm(path, img, maxval=65535):
    """Write a nonnegative image as binary PGM, scaled to the full range."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError("PGM output requires a 2-D image")
    if maxval not in (255, 65535):
        raise ValueError("maxval must be 255 or 65535")
    lo, hi = float(img.min()), float(img.max())
    span = hi - lo if hi > lo else 1.0
    scaled = np.round((img - lo) / span * maxval).astype(
        np.uint8 if maxval == 255 else ">u2"
    )
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n{maxval}\n".encode())
        fh.write(scaled.tobytes())


def read_pgm(path):
    """Read a P2 or P5 PGM image, returned as float64 in [0, 1]."""
    with open(path, "rb") as fh:
        data = fh.read()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    magic = tokens[0]
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if magic == b"P2":
        values = np.array(data[pos:].split(), dtype=np.float64)
    elif magic == b"P5":
        pos += 1  # single whitespace after maxval
        dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
        values = np.frombuffer(data, dtype=dtype, offset=pos,
                               count=w * h).astype(np.float64)
    else:
        raise ValueError(f"unsupported PGM magic: {magic!r}")
    if values.size != w * h:
        raise ValueError("PGM pixel count does not match header")
    return values.reshape(h, w) / maxval


def write_image_csv(path, img):
    np.savetxt(path, np.asarray(img, dtype=np.float64), delimiter=",")


def read_image_csv(path):
    img = np.loadtxt(path, delimiter=",", ndmin=2)
    return img


def write_measurements_csv(path, y):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["m", "y"])
        for m, val in enumerate(np.asarray(y, dtype=np.float64)):
            writer.writerow([m, repr(float(val))])


def read_measurements_csv(path):
    values = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if [h.strip() for h in header] != ["m", "y"]:
            raise ValueError(f"unexpected measurement CSV header: {header}")
        for row in reader:
            values.append(float(row[1]))
    return np.array(values)


def config_hash(config):
    """Stable content hash of a JSON-serializable configuration mapping."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def write_manifest(path, config, seed, extra=None):
    manifest = {
        "config": config,
        "seed": int(seed),
        "version": 1,
        "content_hash": config_hash(config),
    }
    if extra:
        manifest.update(extra)
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def read_manifest(path):
    with open(path) as fh:
        return json.load(fh)
