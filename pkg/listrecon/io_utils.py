"""
Binary and text file formats.

LMEV    list-mode events: header <4sIQQH (magic, version, N, geometry hash, n_bins)
        followed by N packed records (u16 det_a, u16 det_b, u16 tof_bin, f32 multiplier)
IMG2    image: header <4sIId (magic, P, Q, spacing) followed by P*Q f32, row-major
LMPD    network checkpoint: header <4sIQ (magic, version, config hash), u32 block
        count, then per parameter block a u64 length and the f64 values
PGM     16-bit binary preview, min-max scaled
sidecar JSON metadata written next to every event file

All binary formats are little-endian.
"""

import csv
import hashlib
import json
import logging
import struct
from collections import OrderedDict
from pathlib import Path
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from .events import EventList
from .exceptions import FileFormatError, HashMismatchError
from .geometry import ScannerGeometry, TofSpec
from .images import Image2D, ImageGrid

logger = logging.getLogger(__name__)

LMEV_MAGIC = b'LMEV'
LMEV_VERSION = 1
LMEV_HEADER = struct.Struct('<4sIQQH')
LMEV_RECORD = np.dtype([('det_a', '<u2'), ('det_b', '<u2'), ('tof_bin', '<u2'), ('multiplier', '<f4')])

IMG_MAGIC = b'IMG2'
IMG_HEADER = struct.Struct('<4sIId')

LMPD_MAGIC = b'LMPD'
LMPD_VERSION = 1
LMPD_HEADER = struct.Struct('<4sIQ')
U32 = struct.Struct('<I')
U64 = struct.Struct('<Q')

U16_MAX = np.iinfo(np.uint16).max


def _digest(payload: bytes) -> int:
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), 'little')


def geometry_hash(geom: ScannerGeometry, tof: TofSpec, grid: ImageGrid) -> int:
    """64-bit hash of everything that defines the system matrix."""
    payload = json.dumps({'geometry': geom.as_dict(), 'tof': tof.as_dict(), 'grid': grid.as_dict()},
                         sort_keys=True).encode()
    return _digest(payload)


def content_hash(path) -> str:
    h = hashlib.blake2b(digest_size=8)
    with open(path, 'rb') as fh:
        for block in iter(lambda: fh.read(1 << 20), b''):
            h.update(block)
    return h.hexdigest()


# ---------------------------------------------------------------------------
# LMEV

def write_lmev(path, events: EventList, geom_hash: int, n_bins: int) -> None:
    if len(events) and max(events.det_a.max(), events.det_b.max(), events.tof_bin.max()) > U16_MAX:
        raise FileFormatError("Event indices do not fit in 16 bits")
    records = np.empty(len(events), dtype=LMEV_RECORD)
    records['det_a'] = events.det_a
    records['det_b'] = events.det_b
    records['tof_bin'] = events.tof_bin
    records['multiplier'] = events.multiplier
    with open(path, 'wb') as fh:
        fh.write(LMEV_HEADER.pack(LMEV_MAGIC, LMEV_VERSION, len(events), geom_hash, n_bins))
        fh.write(records.tobytes())
    logger.debug(f"Wrote {len(events)} events to {path}")


def read_lmev(path) -> Tuple[EventList, dict]:
    data = Path(path).read_bytes()
    if len(data) < LMEV_HEADER.size:
        raise FileFormatError(f"{path}: truncated header")
    magic, version, n, geom_hash, n_bins = LMEV_HEADER.unpack_from(data)
    if magic != LMEV_MAGIC:
        raise FileFormatError(f"{path}: bad magic {magic!r}")
    if version != LMEV_VERSION:
        raise FileFormatError(f"{path}: unsupported version {version}")
    body = len(data) - LMEV_HEADER.size
    if body != n * LMEV_RECORD.itemsize:
        raise FileFormatError(f"{path}: header says {n} records, file holds "
                              f"{body / LMEV_RECORD.itemsize:.1f}")
    records = np.frombuffer(data, dtype=LMEV_RECORD, count=n, offset=LMEV_HEADER.size)
    if n and np.any(records['multiplier'] < 0):
        raise FileFormatError(f"{path}: negative multiplier")
    events = EventList(records['det_a'], records['det_b'], records['tof_bin'],
                       records['multiplier'].astype(np.float64))
    return events, {'version': version, 'n_events': n, 'geometry_hash': geom_hash, 'n_bins': n_bins}


# ---------------------------------------------------------------------------
# IMG2 / PGM

def write_image(path, img: Image2D) -> None:
    Q, P = img.values.shape
    with open(path, 'wb') as fh:
        fh.write(IMG_HEADER.pack(IMG_MAGIC, P, Q, img.spacing))
        fh.write(np.ascontiguousarray(img.values, dtype='<f4').tobytes())


def read_image(path) -> Image2D:
    data = Path(path).read_bytes()
    if len(data) < IMG_HEADER.size:
        raise FileFormatError(f"{path}: truncated header")
    magic, P, Q, spacing = IMG_HEADER.unpack_from(data)
    if magic != IMG_MAGIC:
        raise FileFormatError(f"{path}: bad magic {magic!r}")
    if len(data) - IMG_HEADER.size != P * Q * 4:
        raise FileFormatError(f"{path}: expected {P}x{Q} pixels")
    values = np.frombuffer(data, dtype='<f4', count=P * Q, offset=IMG_HEADER.size)
    if not np.all(np.isfinite(values)):
        raise FileFormatError(f"{path}: non-finite pixel values")
    return Image2D(values.reshape(Q, P).astype(np.float64), spacing)


def write_pgm(path, img: Image2D) -> None:
    """16-bit PGM preview with +y pointing up."""
    v = img.values[::-1]
    lo, hi = float(v.min()), float(v.max())
    if hi > lo:
        scaled = np.rint((v - lo) / (hi - lo) * U16_MAX)
    else:
        scaled = np.zeros_like(v)
    Q, P = v.shape
    with open(path, 'wb') as fh:
        fh.write(f"P5\n{P} {Q}\n{U16_MAX}\n".encode('ascii'))
        fh.write(scaled.astype('>u2').tobytes())


# ---------------------------------------------------------------------------
# sidecar

def write_sidecar(path, meta: dict) -> None:
    Path(path).write_text(json.dumps(meta, indent=2, sort_keys=True))


def read_sidecar(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise FileFormatError(f"{path}: invalid sidecar ({e})") from e


def sidecar_path(event_path) -> Path:
    return Path(event_path).with_suffix('.json')


# ---------------------------------------------------------------------------
# LMPD checkpoint

def write_checkpoint(path, state: 'OrderedDict[str, np.ndarray]', config_hash: int) -> None:
    """Parameter and buffer blocks in declaration order."""
    with open(path, 'wb') as fh:
        fh.write(LMPD_HEADER.pack(LMPD_MAGIC, LMPD_VERSION, config_hash))
        fh.write(U32.pack(len(state)))
        for value in state.values():
            flat = np.ascontiguousarray(np.asarray(value, dtype='<f8').ravel())
            fh.write(U64.pack(flat.shape[0]))
            fh.write(flat.tobytes())


def read_checkpoint(path, expected_hash=None) -> Tuple[int, List[np.ndarray]]:
    data = Path(path).read_bytes()
    if len(data) < LMPD_HEADER.size + U32.size:
        raise FileFormatError(f"{path}: truncated header")
    magic, version, config_hash = LMPD_HEADER.unpack_from(data)
    if magic != LMPD_MAGIC:
        raise FileFormatError(f"{path}: bad magic {magic!r}")
    if version != LMPD_VERSION:
        raise FileFormatError(f"{path}: unsupported version {version}")
    if expected_hash is not None and config_hash != expected_hash:
        raise HashMismatchError(f"{path}: checkpoint config hash {config_hash:016x} "
                                f"does not match {expected_hash:016x}")

    offset = LMPD_HEADER.size
    (n_blocks,) = U32.unpack_from(data, offset)
    offset += U32.size
    blocks = []
    for _ in range(n_blocks):
        if offset + U64.size > len(data):
            raise FileFormatError(f"{path}: truncated block table")
        (length,) = U64.unpack_from(data, offset)
        offset += U64.size
        if offset + 8 * length > len(data):
            raise FileFormatError(f"{path}: truncated parameter block")
        blocks.append(np.frombuffer(data, dtype='<f8', count=length, offset=offset).copy())
        offset += 8 * length
    if offset != len(data):
        raise FileFormatError(f"{path}: trailing bytes after {n_blocks} blocks")
    return config_hash, blocks


# ---------------------------------------------------------------------------
# CSV

def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, 'w', newline='') as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)


def read_csv(path) -> List[dict]:
    with open(path, newline='') as fh:
        return list(csv.DictReader(fh))
