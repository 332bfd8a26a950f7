#!/usr/bin/env python3
"""JPEG codec over stdin/stdout, for use as the external-codec baseline.

    pil_codec.py encode --quality 60 --shape 1,28,28 < raw > jpeg
    pil_codec.py decode --shape 1,28,28 < jpeg > raw

Raw pixels are uint8, channel-first. Exit status 1 on any decode failure.
"""

import argparse
import io
import sys

import numpy as np
from PIL import Image


def parse_shape(text):
    shape = tuple(int(s) for s in text.split(","))
    if len(shape) != 3 or shape[0] not in (1, 3):
        raise argparse.ArgumentTypeError(f"shape must be C,H,W with C in (1, 3), got {text}")
    return shape


def encode(raw: bytes, shape, quality: int) -> bytes:
    c, h, w = shape
    px = np.frombuffer(raw, dtype=np.uint8).reshape(shape)
    img = Image.fromarray(px[0]) if c == 1 else Image.fromarray(px.transpose(1, 2, 0))
    buf = io.BytesIO()
    img.save(buf, format="JPEG", quality=quality)
    return buf.getvalue()


def decode(data: bytes, shape) -> bytes:
    c, h, w = shape
    img = Image.open(io.BytesIO(data))
    img.load()
    img = img.convert("L" if c == 1 else "RGB")
    if img.size != (w, h):
        raise ValueError(f"decoded size {img.size} != {(w, h)}")
    px = np.asarray(img)
    px = px[None] if c == 1 else px.transpose(2, 0, 1)
    return np.ascontiguousarray(px).tobytes()


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("mode", choices=["encode", "decode"])
    ap.add_argument("--shape", type=parse_shape, required=True)
    ap.add_argument("--quality", type=int, default=60)
    args = ap.parse_args(argv)
    data = sys.stdin.buffer.read()
    try:
        out = encode(data, args.shape, args.quality) if args.mode == "encode" else decode(data, args.shape)
    except Exception as e:  # corrupted streams fail in many ways
        print(f"pil_codec: {e}", file=sys.stderr)
        return 1
    sys.stdout.buffer.write(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
