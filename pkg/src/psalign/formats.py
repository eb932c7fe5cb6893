"""CSV files: datasets, share tables, revealed joins and intersection lists.

Datasets are ``id,attr_hex`` with UTF-8 ids of at most 64 bytes and every
attribute the same number of hex bytes. Share tables and revealed joins are
``row,u_share_hex,v_share_hex`` and ``row,u_hex,v_hex``.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .crypto import RandomSource
from .psa import Dataset, JoinedShares


class FormatError(ValueError):
    pass


def _hex_rows(values: list[str], what: str, path) -> np.ndarray:
    try:
        raw = [bytes.fromhex(v) for v in values]
    except ValueError as e:
        raise FormatError(f"{path}: bad hex in {what}: {e}") from None
    widths = {len(r) for r in raw}
    if len(widths) > 1:
        raise FormatError(f"{path}: {what} values have different widths {sorted(widths)}")
    width = widths.pop() if widths else 0
    return np.frombuffer(b"".join(raw), dtype=np.uint8).reshape(len(raw), width).copy()


def _read(path, header: list[str]) -> list[list[str]]:
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    if not rows or [h.strip() for h in rows[0]] != header:
        raise FormatError(f"{path}: expected header {','.join(header)}")
    body = rows[1:]
    for k, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise FormatError(f"{path}:{k}: expected {len(header)} fields, got {len(r)}")
    return body


def _write(path, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def read_dataset(path) -> Dataset:
    body = _read(path, ["id", "attr_hex"])
    if not body:
        raise FormatError(f"{path}: dataset is empty")
    attrs = _hex_rows([r[1] for r in body], "attr_hex", path)
    try:
        return Dataset([r[0].encode("utf-8") for r in body], attrs)
    except ValueError as e:
        raise FormatError(f"{path}: {e}") from None


def write_dataset(path, ds: Dataset) -> None:
    _write(path, ["id", "attr_hex"], ((i.decode("utf-8"), bytes(a).hex()) for i, a in zip(ds.ids, ds.attrs)))


def read_shares(path) -> JoinedShares:
    body = _read(path, ["row", "u_share_hex", "v_share_hex"])
    return JoinedShares(_hex_rows([r[1] for r in body], "u_share_hex", path),
                        _hex_rows([r[2] for r in body], "v_share_hex", path))


def write_shares(path, shares: JoinedShares) -> None:
    _write(path, ["row", "u_share_hex", "v_share_hex"],
           ((k, bytes(u).hex(), bytes(v).hex()) for k, (u, v) in enumerate(zip(shares.u, shares.v))))


def read_join(path) -> list[tuple[bytes, bytes]]:
    body = _read(path, ["row", "u_hex", "v_hex"])
    try:
        return [(bytes.fromhex(r[1]), bytes.fromhex(r[2])) for r in body]
    except ValueError as e:
        raise FormatError(f"{path}: bad hex: {e}") from None


def write_join(path, rows) -> None:
    _write(path, ["row", "u_hex", "v_hex"], ((k, u.hex(), v.hex()) for k, (u, v) in enumerate(rows)))


def write_ids(path, ids) -> None:
    _write(path, ["id"], ([i.decode("utf-8")] for i in ids))


def read_ids(path) -> list[bytes]:
    return [r[0].encode("utf-8") for r in _read(path, ["id"])]


def generate_datasets(n: int, m: int, alpha: float, attr_width: int, seed: int) -> tuple[Dataset, Dataset]:
    """Two random datasets sharing exactly ``floor(alpha * min(n, m))`` ids."""
    if not 0 <= alpha <= 1:
        raise ValueError("overlap fraction must lie in [0, 1]")
    if n < 1 or m < 1:
        raise ValueError("datasets need at least one record")
    if attr_width < 1:
        raise ValueError("attribute width must be at least one byte")
    rng = RandomSource.from_int(seed)
    shared = int(alpha * min(n, m))
    ids: set[str] = set()
    fresh = []
    while len(fresh) < n + m - shared:
        token = "id-" + rng.bytes(8).hex()
        if token not in ids:
            ids.add(token)
            fresh.append(token)
    common = fresh[:shared]
    x = common + fresh[shared:n]
    y = common + fresh[n:]
    rng.shuffle(x)
    rng.shuffle(y)
    return (Dataset([i.encode() for i in x], rng.array((n, attr_width))),
            Dataset([i.encode() for i in y], rng.array((m, attr_width))))


def ensure_parent(path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
