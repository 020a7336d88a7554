"""Adjustment from summary risk differences, and positive-control sensitivity analysis.

Notation: ``RD_{AB|C}`` is the difference in the mean of B between A=1 and A=0
within strata of C; a leading ``E`` averages over C.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .errors import DataError, IdentificationError

DEN_TOL = 1e-12


@dataclass(frozen=True)
class RiskDifferenceSummary:
    """Crude risk differences among binary X, binary Z, outcome Y and control outcome W.

    Every field is optional; each operation checks for the ones it needs.
    ``pr_z_x1`` holds ``(pr(Z=0, X=1), pr(Z=1, X=1))``.
    """

    rd_xy_given_z: float | None = None
    rd_xw_given_z: float | None = None
    rd_zy_given_x0: float | None = None
    rd_zy_given_x1: float | None = None
    rd_zw_given_x0: float | None = None
    rd_zw_given_x1: float | None = None
    rd_xw_given_z0: float | None = None
    rd_xw_given_z1: float | None = None
    pr_z_x1: tuple[float, float] | None = None
    averaged_rd_zy_given_x: float | None = None
    averaged_rd_zw_given_x: float | None = None

    def __post_init__(self):
        for f in fields(self):
            val = getattr(self, f.name)
            if val is not None and f.name != "pr_z_x1":
                object.__setattr__(self, f.name, float(val))
        if self.pr_z_x1 is not None:
            p0, p1 = (float(p) for p in self.pr_z_x1)
            if not (0 <= p0 <= 1 and 0 <= p1 <= 1 and p0 + p1 <= 1 + 1e-12):
                raise DataError(f"pr(Z=z, X=1) must be probabilities summing to at most 1, got {self.pr_z_x1}")
            object.__setattr__(self, "pr_z_x1", (p0, p1))

    def need(self, *names: str) -> tuple:
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            raise DataError(f"summary is missing {', '.join(missing)}")
        return tuple(getattr(self, n) for n in names)

    @property
    def pr_x1(self) -> float:
        p0, p1 = self.need("pr_z_x1")[0]
        return p0 + p1

    def averaged_zy(self) -> float:
        """``E(RD_{ZY|X})``, given directly or averaged from the per-stratum values."""
        if self.averaged_rd_zy_given_x is not None:
            return self.averaged_rd_zy_given_x
        r0, r1 = self.need("rd_zy_given_x0", "rd_zy_given_x1")
        return (1 - self.pr_x1) * r0 + self.pr_x1 * r1

    def averaged_zw(self) -> float:
        if self.averaged_rd_zw_given_x is not None:
            return self.averaged_rd_zw_given_x
        r0, r1 = self.need("rd_zw_given_x0", "rd_zw_given_x1")
        return (1 - self.pr_x1) * r0 + self.pr_x1 * r1

    @classmethod
    def from_file(cls, path) -> "RiskDifferenceSummary":
        """Parse ``key = value`` lines; ``#`` starts a comment; ``pr_z_x1`` takes two numbers."""
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise DataError(f"cannot read summary file {path}: {exc}") from exc
        return cls.from_text(text)

    @classmethod
    def from_text(cls, text: str) -> "RiskDifferenceSummary":
        known = {f.name for f in fields(cls)}
        values: dict = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DataError(f"line {lineno}: expected key = value")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in known:
                raise DataError(f"line {lineno}: unknown key {key!r}")
            try:
                nums = [float(t) for t in val.replace(",", " ").split()]
            except ValueError:
                raise DataError(f"line {lineno}: non-numeric value {val!r}") from None
            if key == "pr_z_x1":
                if len(nums) != 2:
                    raise DataError(f"line {lineno}: pr_z_x1 needs two numbers")
                values[key] = tuple(nums)
            else:
                if len(nums) != 1:
                    raise DataError(f"line {lineno}: {key} needs one number")
                values[key] = nums[0]
        return cls(**values)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            val = getattr(self, f.name)
            if val is None:
                continue
            if f.name == "pr_z_x1":
                lines.append(f"{f.name} = {val[0]!r} {val[1]!r}")
            else:
                lines.append(f"{f.name} = {val!r}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class BinaryAdjustment:
    ace: float
    gamma2: float
    gamma3: float


@dataclass(frozen=True)
class SensitivityResult:
    gamma1: float
    gamma2: float
    bound: tuple[float, float]

    def ace(self, ace_xw: float) -> float:
        """ACE of X on Y implied by a given ACE of X on the positive control outcome."""
        return self.gamma1 + self.gamma2 * ace_xw


def _ratio(num: float, den: float, what: str) -> float:
    if abs(den) <= DEN_TOL:
        raise IdentificationError(f"{what} is zero: no Z-W association, bridge not identified")
    return num / den


def binary_nc_adjust(summary: RiskDifferenceSummary, interaction: bool = False) -> BinaryAdjustment:
    """ACE of binary X from crude risk differences under a bridge linear in W.

    With ``interaction`` the bridge is ``g0 + g1 X + g2 W + g3 XW`` and the slope
    on W is identified separately in each exposure stratum; otherwise ``g3 = 0``
    and the X-averaged ratio is used.
    """
    e_xy, e_xw = summary.need("rd_xy_given_z", "rd_xw_given_z")
    if not interaction:
        g2 = _ratio(summary.averaged_zy(), summary.averaged_zw(), "E(RD_ZW|X)")
        return BinaryAdjustment(e_xy - g2 * e_xw, g2, 0.0)
    zy0, zy1, zw0, zw1, xw0, xw1 = summary.need(
        "rd_zy_given_x0", "rd_zy_given_x1", "rd_zw_given_x0", "rd_zw_given_x1", "rd_xw_given_z0", "rd_xw_given_z1"
    )
    p0, p1 = summary.need("pr_z_x1")[0]
    g2 = _ratio(zy0, zw0, "RD_ZW|X=0")
    g23 = _ratio(zy1, zw1, "RD_ZW|X=1")
    g3 = g23 - g2
    ace = e_xy - g23 * e_xw + g3 * (xw0 * p0 + xw1 * p1)
    return BinaryAdjustment(ace, g2, g3)


def positive_control_adjust(summary: RiskDifferenceSummary, ace_xw_range=(0.0, 0.0)) -> SensitivityResult:
    """Bound the ACE of X on Y when W is a positive control with ACE in ``[a, b]``.

    ``ACE_XY = g1 + g2 ACE_XW``; the returned bound is sorted, since a negative
    ``g2`` reverses the endpoints.
    """
    a, b = (float(t) for t in ace_xw_range)
    if a > b:
        raise DataError(f"empty sensitivity range [{a}, {b}]")
    e_xy, e_xw = summary.need("rd_xy_given_z", "rd_xw_given_z")
    g2 = _ratio(summary.averaged_zy(), summary.averaged_zw(), "E(RD_ZW|X)")
    g1 = e_xy - g2 * e_xw
    ends = sorted((g1 + g2 * a, g1 + g2 * b))
    return SensitivityResult(g1, g2, (ends[0], ends[1]))


def explain_away_threshold(summary: RiskDifferenceSummary) -> float:
    """ACE of X on the positive control at which the implied ACE of X on Y is zero."""
    res = positive_control_adjust(summary)
    if res.gamma2 == 0:
        raise IdentificationError("gamma2 is zero: no exposure effect on W can explain away the association")
    return -res.gamma1 / res.gamma2
