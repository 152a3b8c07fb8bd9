"""Binary array container and dataset manifest I/O.

Array record layout, all integers little-endian:

    magic    4 bytes   b"DBAR"
    version  u32       container format version (currently 1)
    rank     u32
    dims     u32 x rank
    dtype    u32       1 = 32-bit float real, 2 = interleaved 32-bit float complex
    payload  row-major array data
    crc      u32       CRC-32 of every preceding byte of the record

A file may hold several consecutive records (a dataset sample stores ground
truth, the low-pass image and the enhanced sequence in one file).  The
dataset manifest is UTF-8 JSON lines: a header record with the sample count
followed by one record per sample carrying the file name, its SHA-256
content hash and the sample metadata.
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
DTYPE_REAL32 = 1
DTYPE_COMPLEX64 = 2


class FormatError(ValueError):
    """Malformed array record."""


class VersionError(FormatError):
    """Record written by an unsupported format version."""


class ChecksumError(FormatError):
    """Stored CRC-32 or manifest hash does not match the payload."""


class TruncatedError(FormatError):
    """Record ends before its declared payload or CRC."""


def _pack_array(arr):
    arr = np.asarray(arr)
    if np.iscomplexobj(arr):
        code = DTYPE_COMPLEX64
        payload = np.ascontiguousarray(arr, dtype="<c8").tobytes()
    else:
        code = DTYPE_REAL32
        payload = np.ascontiguousarray(arr, dtype="<f4").tobytes()
    head = MAGIC + struct.pack("<II", FORMAT_VERSION, arr.ndim)
    head += struct.pack(f"<{arr.ndim}I", *arr.shape)
    head += struct.pack("<I", code)
    body = head + payload
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def write_arrays(path, arrays):
    """Write consecutive array records to a new file."""
    with open(path, "wb") as fh:
        for arr in arrays:
            fh.write(_pack_array(arr))


def _read_exact(fh, n, name):
    data = fh.read(n)
    if len(data) != n:
        raise TruncatedError(f"{name}: record truncated")
    return data


def read_arrays(path):
    """Read every array record from a file, validating per-record CRCs."""
    name = os.path.basename(path)
    out = []
    with open(path, "rb") as fh:
        while True:
            magic = fh.read(4)
            if not magic:
                break
            if magic != MAGIC:
                raise FormatError(f"{name}: bad magic {magic!r}")
            head = magic + _read_exact(fh, 8, name)
            version, rank = struct.unpack("<II", head[4:12])
            if version != FORMAT_VERSION:
                raise VersionError(f"{name}: unsupported format version {version}")
            if rank > 8:
                raise FormatError(f"{name}: implausible rank {rank}")
            dim_bytes = _read_exact(fh, 4 * rank + 4, name)
            head += dim_bytes
            dims = struct.unpack(f"<{rank}I", dim_bytes[:-4])
            code = struct.unpack("<I", dim_bytes[-4:])[0]
            count = int(np.prod(dims, dtype=np.int64)) if rank else 1
            if code == DTYPE_REAL32:
                nbytes, dtype = 4 * count, "<f4"
            elif code == DTYPE_COMPLEX64:
                nbytes, dtype = 8 * count, "<c8"
            else:
                raise FormatError(f"{name}: unknown dtype code {code}")
            payload = _read_exact(fh, nbytes, name)
            stored = struct.unpack("<I", _read_exact(fh, 4, name))[0]
            if zlib.crc32(head + payload) & 0xFFFFFFFF != stored:
                raise ChecksumError(f"{name}: CRC mismatch")
            out.append(np.frombuffer(payload, dtype=dtype).reshape(dims).copy())
    return out


def sha256_file(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


MANIFEST_NAME = "manifest.jsonl"


def write_manifest(directory, records):
    """Atomically commit the dataset manifest (header line + one per sample)."""
    path = os.path.join(directory, MANIFEST_NAME)
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"kind": "dbar-dataset",
                             "version": FORMAT_VERSION,
                             "count": len(records)}) + "\n")
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
    os.replace(tmp, path)
    return path


def read_manifest(directory):
    path = os.path.join(directory, MANIFEST_NAME)
    with open(path, encoding="utf-8") as fh:
        lines = [json.loads(line) for line in fh if line.strip()]
    if not lines or lines[0].get("kind") != "dbar-dataset":
        raise FormatError(f"{path}: missing dataset header record")
    if lines[0].get("version") != FORMAT_VERSION:
        raise VersionError(f"{path}: unsupported manifest version")
    header, records = lines[0], lines[1:]
    if header["count"] != len(records):
        raise FormatError(f"{path}: header count {header['count']} != "
                          f"{len(records)} records")
    return records
