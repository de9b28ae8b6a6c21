"""Writes the binary golden files with plain struct packing.

Independent of the C++ writers: the layout is spelled out here byte by byte.
"""
import json
import struct
import zlib
from pathlib import Path

HERE = Path(__file__).resolve().parent

# Quiet NaN, a NaN with payload bits and a negative NaN; all must survive.
NAN_BITS = [0x7FC00000, 0x7FC00001, 0xFFC00000, 0x7F800001]


def f32(bits):
    return struct.pack("<I", bits)


def val(x):
    return struct.pack("<f", x)


def geo():
    h, w = 3, 4
    body = b""
    cells = []
    for y in range(h):
        for x in range(w):
            i = y * w + x
            if i % 5 == 2:
                nb = NAN_BITS[i % len(NAN_BITS)]
                body += f32(nb) * 3
                cells.append({"x": x, "y": y, "bits": [nb] * 3})
            else:
                v = (100.0 + x * 0.5, -20.0 + y * 0.25, 3.0 + 0.125 * i)
                body += b"".join(val(c) for c in v)
                cells.append({"x": x, "y": y, "value": list(v)})
    return b"GEO1" + struct.pack("<II", h, w) + body, {"height": h, "width": w, "cells": cells}


def cor():
    h, w = 2, 5
    body = b""
    cells = []
    for y in range(h):
        for x in range(w):
            i = y * w + x
            if i in (1, 7):
                nb = NAN_BITS[i % len(NAN_BITS)]
                body += f32(nb) + f32(nb)
                cells.append({"x": x, "y": y, "bits": [nb, nb]})
            else:
                v = (x + 0.75, y - 0.5)
                body += val(v[0]) + val(v[1])
                cells.append({"x": x, "y": y, "value": list(v)})
    return b"COR1" + struct.pack("<II", h, w) + body, {"height": h, "width": w, "cells": cells}


def dfm(n_det):
    h, w, d = 2, 3, 4
    scale = 0.840896415  # 2^-0.25 rounded to float
    desc = []
    for i in range(h * w):
        v = [0.5, -0.5, 0.5, -0.5] if i % 2 else [1.0, 0.0, 0.0, 0.0]
        desc += v
    det = [0.125 * i for i in range(h * w)]
    rel = [1.0 - 0.0625 * i for i in range(h * w)]
    out = b"DFM1" + struct.pack("<HIIHBf", 1, h, w, d, n_det, scale)
    out += b"".join(val(x) for x in desc)
    out += b"".join(val(x) for x in det)
    if n_det == 2:
        out += b"".join(val(x) for x in rel)
    meta = {"height": h, "width": w, "dim": d, "n_det": n_det,
            "scale_bits": struct.unpack("<I", struct.pack("<f", scale))[0],
            "descriptors": desc, "detection": det}
    if n_det == 2:
        meta["reliability"] = rel
    return out, meta


def png(width, height, bit_depth, color_type, rows):
    """Minimal PNG writer: every scanline uses filter 0."""
    def chunk(tag, body):
        return (struct.pack(">I", len(body)) + tag + body +
                struct.pack(">I", zlib.crc32(tag + body) & 0xFFFFFFFF))
    raw = b"".join(b"\x00" + r for r in rows)
    return (b"\x89PNG\r\n\x1a\n" +
            chunk(b"IHDR", struct.pack(">IIBBBBB", width, height, bit_depth, color_type, 0, 0, 0)) +
            chunk(b"IDAT", zlib.compress(raw)) + chunk(b"IEND", b""))


def gray16():
    values = [0, 1000, 65535, 257, 4095, 12345]
    rows = [struct.pack(">3H", *values[r * 3:r * 3 + 3]) for r in range(2)]
    return png(3, 2, 16, 0, rows), {"height": 2, "width": 3, "values": values}


def gray_alpha8():
    gray = [10, 200, 0, 255]
    alpha = [255, 0, 128, 7]
    rows = [bytes([gray[r * 2], alpha[r * 2], gray[r * 2 + 1], alpha[r * 2 + 1]]) for r in range(2)]
    return png(2, 2, 8, 4, rows), {"height": 2, "width": 2, "values": gray}


def main():
    expected = {}
    for name, (data, meta) in {
        "backplane.geo": geo(),
        "field.cor": cor(),
        "features1.dfm": dfm(1),
        "features2.dfm": dfm(2),
        "gray16.png": gray16(),
        "gray_alpha8.png": gray_alpha8(),
    }.items():
        (HERE / name).write_bytes(data)
        expected[name] = meta
    (HERE / "expected.json").write_text(json.dumps(expected, indent=1) + "\n")


if __name__ == "__main__":
    main()
