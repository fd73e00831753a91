"""Text serialization of sparse voxel sets as merged index runs.

Occupied linear indices are sorted and consecutive stretches collapse into
``a-b`` ranges; runs are joined with a bare comma::

    runs := run ("," run)*
    run  := INT | INT "-" INT

Singletons are written as a bare integer, never ``k-k``.
"""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .mesh_io import TriMesh, format_obj
from .voxel import DEFAULT_RESOLUTION, VoxelGrid, voxelize


class TokenError(ValueError):
    """Base class for decode failures; ``fragment`` is the offending substring."""

    def __init__(self, fragment: str, detail: str = ""):
        self.fragment = fragment
        msg = f"{type(self).__name__}({fragment!r})"
        super().__init__(f"{msg}: {detail}" if detail else msg)


class MalformedTokens(TokenError):
    pass


class DescendingRange(TokenError):
    pass


class IndexOutOfBounds(TokenError):
    pass


class UnsortedRuns(TokenError):
    """Runs out of order or overlapping."""


@dataclass(frozen=True)
class TokenString:
    text: str
    resolution: int = DEFAULT_RESOLUTION

    def __str__(self) -> str:
        return self.text


def runs_of(indices: np.ndarray) -> np.ndarray:
    """Maximal runs of a sorted unique index array as an (N, 2) array of [start, end]."""
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    breaks = np.nonzero(np.diff(idx) != 1)[0]
    starts = np.concatenate([[idx[0]], idx[breaks + 1]])
    ends = np.concatenate([idx[breaks], [idx[-1]]])
    return np.stack([starts, ends], axis=1)


def encode(grid: VoxelGrid) -> TokenString:
    parts = []
    for a, b in runs_of(grid.indices).tolist():
        parts.append(str(a) if a == b else f"{a}-{b}")
    return TokenString(",".join(parts), grid.resolution)


_RUN = re.compile(r"(\d+)(?:-(\d+))?\Z")


def parse_runs(text: str, resolution: int = DEFAULT_RESOLUTION) -> list[tuple[int, int]]:
    """Validate token text and return its runs as inclusive (start, end) pairs.

    Adjacent-but-unmerged runs such as ``"0,1"`` are accepted; they are sorted
    and disjoint, only not canonical.
    """
    if text == "":
        return []
    fast = _parse_fast(text, resolution)
    if fast is not None:
        return list(zip(fast[0].tolist(), fast[1].tolist()))
    return _parse_slow(text, resolution)


_TEXT = re.compile(r"\d+(?:-\d+)?(?:,\d+(?:-\d+)?)*\Z")


def _parse_fast(text: str, resolution: int):
    """Vectorized parse of well-formed text; None means fall back for the error."""
    if not text.isascii() or _TEXT.match(text) is None:
        return None
    try:
        nums = np.array(text.replace("-", ",").split(","), dtype=np.int64)
    except (OverflowError, ValueError):
        return None
    raw = np.frombuffer(text.encode("ascii"), dtype=np.uint8)
    seps = raw[(raw == 44) | (raw == 45)]  # the k-th separator follows number k
    dash = np.append(seps == 45, False)
    is_start = np.ones(len(nums), dtype=bool)
    is_start[1:] = ~dash[:-1]
    starts = np.nonzero(is_start)[0]
    a = nums[starts]
    b = np.where(dash[starts], nums[np.minimum(starts + 1, len(nums) - 1)], a)
    ranged = dash[starts]
    if (ranged & (b <= a)).any() or (b >= resolution**3).any() or (a[1:] <= b[:-1]).any():
        return None
    return a, b


def _parse_slow(text: str, resolution: int) -> list[tuple[int, int]]:
    limit = resolution**3
    runs = []
    prev_end = -1
    for piece in text.split(","):
        m = _RUN.match(piece)
        if m is None:
            raise MalformedTokens(piece, "expected INT or INT-INT")
        a = int(m.group(1))
        b = int(m.group(2)) if m.group(2) is not None else a
        if m.group(2) is not None and b <= a:
            if b < a:
                raise DescendingRange(piece, f"{a} > {b}")
            raise MalformedTokens(piece, "degenerate range; write a bare integer")
        if b >= limit:
            raise IndexOutOfBounds(piece, f"index >= {limit} (R={resolution})")
        if a <= prev_end:
            raise UnsortedRuns(piece, f"starts at {a}, previous run ended at {prev_end}")
        runs.append((a, b))
        prev_end = b
    return runs


def decode(tokens: TokenString | str, resolution: int | None = None) -> VoxelGrid:
    if isinstance(tokens, TokenString):
        text, R = tokens.text, tokens.resolution
    else:
        text, R = tokens, resolution
    if R is None:
        R = DEFAULT_RESOLUTION
    text = text.strip()
    if text == "":
        return VoxelGrid(R)
    fast = _parse_fast(text, R)
    if fast is None:
        runs = np.array(_parse_slow(text, R), dtype=np.int64).reshape(-1, 2)
        a, b = runs[:, 0], runs[:, 1]
    else:
        a, b = fast
    # expand inclusive runs without a Python loop
    lengths = b - a + 1
    offsets = np.arange(lengths.sum()) - np.repeat(np.cumsum(lengths) - lengths, lengths)
    return VoxelGrid(R, np.repeat(a, lengths) + offsets)


# --- token accounting ---------------------------------------------------------

@dataclass(frozen=True)
class TokenizerModel:
    """Deterministic stand-in for a BPE tokenizer.

    Every non-digit character is one token; each maximal digit run is split
    left to right into chunks of at most ``digit_chunk`` digits, one token each.
    """

    digit_chunk: int = 3

    def count(self, text: str) -> int:
        n = 0
        for m in re.finditer(r"\d+|\D", text):
            s = m.group()
            if s[0].isdigit():
                n += -(-len(s) // self.digit_chunk)
            else:
                n += 1
        return n


DEFAULT_TOKENIZER = TokenizerModel()


def count_tokens(text: str, tokenizer: TokenizerModel | Callable[[str], int] | None = None) -> int:
    tokenizer = tokenizer or DEFAULT_TOKENIZER
    if isinstance(tokenizer, TokenizerModel):
        return tokenizer.count(text)
    return int(tokenizer(text))


REPRESENTATIONS = ("mesh-text", "quantized-mesh", "voxel-coords", "index-list", "merged-runs")


@dataclass(frozen=True)
class TokenReport:
    representation: str
    tokens: int
    ratio: float = field(default=1.0)


def quantized_mesh_text(mesh: TriMesh, R: int) -> str:
    q = np.clip(np.floor(mesh.vertices * R), 0, R - 1).astype(np.int64)
    out = io.StringIO()
    for x, y, z in q:
        out.write(f"v {x} {y} {z}\n")
    for a, b, c in mesh.faces + 1:
        out.write(f"f {a} {b} {c}\n")
    return out.getvalue()


def voxel_coords_text(grid: VoxelGrid) -> str:
    return "\n".join(f"{x},{y},{z}" for x, y, z in grid.cells.tolist())


def index_list_text(grid: VoxelGrid) -> str:
    return ",".join(map(str, grid.indices.tolist()))


def compare_representations(
    mesh: TriMesh,
    R: int = DEFAULT_RESOLUTION,
    mode: str = "surface",
    tokenizer: TokenizerModel | Callable[[str], int] | None = None,
) -> list[TokenReport]:
    """Token counts for the five serializations of one normalized mesh.

    Order: mesh-text, quantized-mesh, voxel-coords, index-list, merged-runs.
    ``ratio`` is the mesh-text count divided by the representation's count.
    """
    mesh = TriMesh(mesh.vertices, mesh.faces)  # labels would add group records
    grid = voxelize(mesh, R, mode)
    texts = {
        "mesh-text": format_obj(mesh),
        "quantized-mesh": quantized_mesh_text(mesh, R),
        "voxel-coords": voxel_coords_text(grid),
        "index-list": index_list_text(grid),
        "merged-runs": encode(grid).text,
    }
    counts = {k: count_tokens(v, tokenizer) for k, v in texts.items()}
    assert counts["merged-runs"] <= counts["index-list"] <= counts["voxel-coords"], counts
    base = counts["mesh-text"]
    return [TokenReport(k, counts[k], base / counts[k] if counts[k] else float("inf")) for k in REPRESENTATIONS]


def reports_to_csv(reports: list[TokenReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["representation", "tokens", "ratio"])
    for r in reports:
        w.writerow([r.representation, r.tokens, f"{r.ratio:.6f}"])
    return buf.getvalue()
