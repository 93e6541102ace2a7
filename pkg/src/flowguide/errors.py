"""Exception hierarchy shared by all flowguide modules.

Two branches matter for the CLI exit-code convention: DataError maps to
exit code 2, NumericError to exit code 3.
"""

from __future__ import annotations


class FlowGuideError(Exception):
    """Base class for all flowguide errors."""


class DataError(FlowGuideError):
    """Invalid inputs, malformed files, or violated data contracts."""


class NumericError(FlowGuideError):
    """Numerical failures: non-finite values, tolerance violations."""


# --- sparse latent construction ---

class DuplicatePosition(DataError):
    def __init__(self, index: int, position) -> None:
        self.index = index
        self.position = tuple(int(v) for v in position)
        super().__init__(f"duplicate voxel position {self.position} at entry {index}")


class OutOfBounds(DataError):
    def __init__(self, index: int, position, resolution: int) -> None:
        self.index = index
        self.position = tuple(int(v) for v in position)
        super().__init__(
            f"voxel position {self.position} at entry {index} outside [0, {resolution - 1}]^3"
        )


class ChannelMismatch(DataError):
    def __init__(self, index: int, expected: int, got: int) -> None:
        self.index = index
        super().__init__(f"entry {index} has {got} channels, expected {expected}")


class NonFiniteValue(NumericError):
    def __init__(self, where: str) -> None:
        super().__init__(f"non-finite values in {where}")


class EmptyInput(DataError):
    def __init__(self, what: str = "input") -> None:
        super().__init__(f"empty {what}")


# --- partitioning and correspondence ---

class KTooLarge(DataError):
    def __init__(self, k: int, n: int) -> None:
        super().__init__(f"k={k} exceeds number of points {n}")


class DimensionMismatch(DataError):
    def __init__(self, a: int, b: int) -> None:
        super().__init__(f"feature dimensions differ: {a} vs {b}")


class EmptyAppearance(DataError):
    def __init__(self) -> None:
        super().__init__("appearance shape has no voxels to match against")


class ZeroNormRow(NumericError):
    def __init__(self, side: str, row: int) -> None:
        self.row = row
        super().__init__(f"zero-norm row {row} in matrix '{side}'")


# --- guidance objectives and optimizer ---

class ShapeMismatch(DataError):
    def __init__(self, a, b) -> None:
        super().__init__(f"shape mismatch: {tuple(a)} vs {tuple(b)}")


class EmptyPositiveSet(DataError):
    def __init__(self, index: int) -> None:
        self.index = index
        super().__init__(f"voxel {index} has no same-cluster partner")


class EmptyComplement(DataError):
    def __init__(self, index: int) -> None:
        self.index = index
        super().__init__(f"voxel {index} has an empty complement set")


class MissingTarget(DataError):
    def __init__(self) -> None:
        super().__init__("guidance objective requires an appearance target matrix")


class MissingLabels(DataError):
    def __init__(self) -> None:
        super().__init__("structure guidance requires cluster labels")


# --- flow sampling ---

class TimeOutOfRange(DataError):
    def __init__(self, t: float) -> None:
        super().__init__(f"time {t} outside [0, 1]")


class EmptyBatch(DataError):
    def __init__(self) -> None:
        super().__init__("empty batch")


class BadCondition(DataError):
    def __init__(self, why: str) -> None:
        super().__init__(f"bad condition: {why}")


# --- file formats ---

class BadMagic(DataError):
    def __init__(self, got: bytes) -> None:
        super().__init__(f"bad magic bytes {got!r}")


class BadVersion(DataError):
    def __init__(self, got: int) -> None:
        super().__init__(f"unsupported format version {got}")


class TruncatedFile(DataError):
    def __init__(self, offset: int, needed: int) -> None:
        self.offset = offset
        super().__init__(f"file truncated at byte {offset}, needed {needed} more")


class UnsortedPositions(DataError):
    def __init__(self, record: int) -> None:
        super().__init__(f"positions not in canonical order at record {record}")


class SchemaMismatch(DataError):
    def __init__(self, why: str) -> None:
        super().__init__(f"schema mismatch: {why}")


class DigestMismatch(DataError):
    def __init__(self, what: str, expected: str, got: str) -> None:
        super().__init__(f"{what} digest mismatch: expected {expected[:12]}.., got {got[:12]}..")


class WriteFailure(DataError):
    def __init__(self, path, why: str) -> None:
        super().__init__(f"cannot write {path}: {why}")


# --- evaluation aggregation ---

class ParseError(DataError):
    def __init__(self, line: int, why: str) -> None:
        self.line = line
        super().__init__(f"line {line}: {why}")


class NotAPermutation(DataError):
    def __init__(self, line: int, ranks) -> None:
        self.line = line
        super().__init__(f"line {line}: ranks {sorted(ranks)} are not a permutation of 1..n")


class NoRecords(DataError):
    def __init__(self, criterion: str) -> None:
        super().__init__(f"no records for criterion '{criterion}'")


class ConfigError(DataError):
    def __init__(self, why: str) -> None:
        super().__init__(f"bad config: {why}")
