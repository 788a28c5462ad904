"""Report records shared by every check."""

from typing import Any, ClassVar, Dict, List, Optional

from pydantic import BaseModel, Field


class CheckResult(BaseModel):
    """One named statistic with its threshold; passed=None marks an informational row."""
    name: str
    sample_size: int = 0
    statistic: float
    threshold: Optional[float] = None
    passed: Optional[bool] = None
    details: Dict[str, Any] = Field(default_factory=dict)

    def summary_line(self) -> str:
        mark = {True: "✓", False: "✗", None: "·"}[self.passed]
        threshold = "" if self.threshold is None else f" (threshold {self.threshold:.6g})"
        return f"{mark} {self.name}: {self.statistic:.6g}{threshold} [n={self.sample_size}]"


class StatReport(BaseModel):
    name: str
    checks: List[CheckResult] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed is not False for c in self.checks)

    def add(self, check: CheckResult) -> CheckResult:
        self.checks.append(check)
        return check

    def summary(self) -> Dict[str, Any]:
        return {
            c.name: {"passed": c.passed, "statistic": c.statistic, "threshold": c.threshold}
            for c in self.checks
        }

    CSV_HEADER: ClassVar[List[str]] = ["check", "sample_size", "statistic", "threshold", "passed"]

    def rows(self):
        for c in self.checks:
            yield [c.name, c.sample_size, c.statistic, c.threshold, c.passed]


class BoundRow(BaseModel):
    """One grid point of an error-bound sweep."""
    s: Optional[float]
    t: float
    probe: Optional[float]
    gap: float
    error: float
    sigma_s_given_t: Optional[float]
    alpha_s: Optional[float]
    scale: float
    ratio: float
    ratio_two_thirds: float
    flagged: bool

    @property
    def ratio_sqrt_sigma(self) -> Optional[float]:
        if self.sigma_s_given_t is None or self.sigma_s_given_t == 0.0:
            return None
        return self.gap / self.sigma_s_given_t ** 0.5

    @property
    def ratio_sqrt_alpha(self) -> Optional[float]:
        if self.alpha_s is None or self.alpha_s == 0.0:
            return None
        return self.gap / self.alpha_s ** 0.5


class BoundReport(BaseModel):
    which: str
    rows: List[BoundRow] = Field(default_factory=list)
    error_ceiling: float = Field(description="Rows whose error exceeds this fraction of the gap are flagged")
    min_decrease: float = Field(default=5.0, description="Smallest far/near gap ratio a passing sweep shows")

    @property
    def retained(self) -> List[BoundRow]:
        return [r for r in self.rows if not r.flagged]

    @property
    def fitted_C(self) -> Optional[float]:
        kept = self.retained
        return max(r.ratio for r in kept) if kept else None

    def probes(self) -> List[Optional[float]]:
        seen: List[Optional[float]] = []
        for r in self.rows:
            if r.probe not in seen:
                seen.append(r.probe)
        return seen

    def trend(self, probe: Optional[float] = None) -> Dict[str, Any]:
        """
        Monotone-trend diagnostics for one probe, rows ordered from the
        farthest point toward the limit (decreasing scale).
        """
        rows = sorted((r for r in self.rows if r.probe == probe), key=lambda r: -r.scale)
        gaps = [r.gap for r in rows]
        ratios = [r.ratio for r in rows]
        return {
            "probe": probe,
            "gap_far": gaps[0] if gaps else None,
            "gap_near": gaps[-1] if gaps else None,
            "gap_decrease_factor": (gaps[0] / gaps[-1]) if gaps and gaps[-1] > 0 else None,
            "gap_monotone": all(a >= b for a, b in zip(gaps, gaps[1:])),
            "ratio_max": max(ratios) if ratios else None,
            "ratio_min": min(ratios) if ratios else None,
            "ratio_monotone": all(a >= b for a, b in zip(ratios, ratios[1:])),
            "quadrature_ok": bool(rows) and not any(r.flagged for r in rows),
        }

    def summary(self) -> Dict[str, Any]:
        return {
            "which": self.which,
            "rows": len(self.rows),
            "flagged": len(self.rows) - len(self.retained),
            "fitted_C": self.fitted_C,
            "trends": [self.trend(p) for p in self.probes()],
        }

    def sweep_passed(self, x_t: Optional[float] = None) -> bool:
        """Gap and ratio non-increasing toward the limit, gap down by min_decrease, no flagged rows."""
        trend = self.trend(x_t)
        factor = trend["gap_decrease_factor"]
        return bool(
            trend["gap_monotone"] and trend["ratio_monotone"] and trend["quadrature_ok"]
            and factor is not None and factor >= self.min_decrease
        )

    CSV_HEADER: ClassVar[List[str]] = [
        "s", "t", "probe", "gap", "error", "sigma_s_given_t", "alpha_s",
        "ratio_sqrt_sigma", "ratio_sqrt_alpha", "ratio_two_thirds", "flagged",
    ]

    def csv_rows(self):
        for r in self.rows:
            yield [
                r.s, r.t, r.probe, r.gap, r.error, r.sigma_s_given_t, r.alpha_s,
                r.ratio_sqrt_sigma, r.ratio_sqrt_alpha, r.ratio_two_thirds, r.flagged,
            ]
