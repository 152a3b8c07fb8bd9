"""Reader for the D-bar dataset binary format (external interface contract).

Record layout, little-endian: magic b"DBAR", u32 version, u32 rank,
u32 dims[rank], u32 dtype code (1 = float32 real, 2 = interleaved float32
complex), row-major payload, trailing CRC-32 over all preceding record
bytes.  The dataset manifest is JSON lines: a header record with the sample
count, then one record per sample with file name, SHA-256 and metadata.

Implemented here independently of the generator package; the byte-level
contract is what ties the two sides together.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import zlib

import numpy as np

MAGIC = b"DBAR"
FORMAT_VERSION = 1


class FormatError(ValueError):
    pass


def read_arrays(path):
    """All array records of one file; validates the per-record CRC-32."""
    out = []
    name = os.path.basename(path)
    with open(path, "rb") as fh:
        while True:
            magic = fh.read(4)
            if not magic:
                break
            if magic != MAGIC:
                raise FormatError(f"{name}: bad magic {magic!r}")
            fixed = fh.read(8)
            if len(fixed) != 8:
                raise FormatError(f"{name}: truncated header")
            version, rank = struct.unpack("<II", fixed)
            if version != FORMAT_VERSION:
                raise FormatError(f"{name}: unsupported version {version}")
            rest = fh.read(4 * rank + 4)
            if len(rest) != 4 * rank + 4:
                raise FormatError(f"{name}: truncated dims")
            dims = struct.unpack(f"<{rank}I", rest[:-4])
            code = struct.unpack("<I", rest[-4:])[0]
            count = int(np.prod(dims, dtype=np.int64)) if rank else 1
            if code == 1:
                nbytes, dtype = 4 * count, "<f4"
            elif code == 2:
                nbytes, dtype = 8 * count, "<c8"
            else:
                raise FormatError(f"{name}: unknown dtype code {code}")
            payload = fh.read(nbytes)
            crc_raw = fh.read(4)
            if len(payload) != nbytes or len(crc_raw) != 4:
                raise FormatError(f"{name}: truncated payload")
            stored = struct.unpack("<I", crc_raw)[0]
            if zlib.crc32(magic + fixed + rest + payload) & 0xFFFFFFFF != stored:
                raise FormatError(f"{name}: CRC mismatch")
            out.append(np.frombuffer(payload, dtype=dtype).reshape(dims).copy())
    return out


def read_manifest(directory):
    path = os.path.join(directory, "manifest.jsonl")
    with open(path, encoding="utf-8") as fh:
        lines = [json.loads(line) for line in fh if line.strip()]
    if not lines or lines[0].get("kind") != "dbar-dataset":
        raise FormatError(f"{path}: missing dataset header")
    if lines[0]["count"] != len(lines) - 1:
        raise FormatError(f"{path}: record count mismatch")
    return lines[1:]


def load_samples(directory, verify_hashes=True):
    """Yield (ground_truth, lowpass, enhanced_list, meta) per manifest order."""
    for rec in read_manifest(directory):
        path = os.path.join(directory, rec["file"])
        if verify_hashes:
            digest = hashlib.sha256()
            with open(path, "rb") as fh:
                for block in iter(lambda: fh.read(1 << 20), b""):
                    digest.update(block)
            if digest.hexdigest() != rec["sha256"]:
                raise FormatError(f"{rec['file']}: content hash mismatch")
        arrays = read_arrays(path)
        meta = rec["meta"]
        expected = 2 + len(meta["radii"])
        if len(arrays) != expected:
            raise FormatError(f"{rec['file']}: expected {expected} arrays")
        yield arrays[0], arrays[1], arrays[2:], meta
