"""
Report Generator Module
Renders analysis tables, verification reports and experiment statistics as
fixed-width text, csv or a LaTeX tabular
"""
import csv
import io
import math
from typing import Any, List, Sequence

from jinja2 import DictLoader, Environment, StrictUndefined

from src.exceptions import ParameterError
from src.strategy_analysis import AnalysisRow, VerificationReport

FORMATS = ("table", "csv", "latex")

TEMPLATES = {
    "table": (
        "{% if title %}{{ title }}\n{% endif %}"
        "{{ header }}\n"
        "{{ rule }}\n"
        "{% for line in lines %}{{ line }}\n{% endfor %}"
    ),
    "latex": (
        "\\begin{table}[h]\n"
        "\\centering\n"
        "{% if title %}\\caption{ {{- title -}} }\n{% endif %}"
        "\\begin{tabular}{ {{- spec -}} }\n"
        "\\hline\n"
        "{{ header }} \\\\\n"
        "\\hline\n"
        "{% for line in lines %}{{ line }} \\\\\n{% endfor %}"
        "\\hline\n"
        "\\end{tabular}\n"
        "\\end{table}\n"
    ),
}

STATS_COLUMNS = (
    "R", "alice", "bob", "games", "settled", "mean_bob_gain", "mean_alice_gain",
    "stddev_bob_gain", "stderr_bob_gain", "analytic_reference", "z_score",
    "canceled_rate", "disputed_rate", "advisory_ratio", "verdict",
)

VERIFY_COLUMNS = ("R", "delta_numeric", "delta_closed", "eta_numeric", "eta_closed", "deviation", "status")

SCALING_COLUMNS = ("games", "sessions", "mean_total", "stddev_total")


class ReportGenerator:
    """Formats result rows"""

    _env = Environment(loader=DictLoader(TEMPLATES), undefined=StrictUndefined, keep_trailing_newline=True)

    @staticmethod
    def escape_latex(text: str) -> str:
        """
        Escape special LaTeX characters

        Args:
            text: Text to escape

        Returns:
            Escaped text
        """
        special_chars = {
            "\\": "\\textbackslash{}",  # first, to avoid double-escaping
            "&": "\\&",
            "%": "\\%",
            "$": "\\$",
            "#": "\\#",
            "^": "\\textasciicircum{}",
            "_": "\\_",
            "{": "\\{",
            "}": "\\}",
            "~": "\\textasciitilde{}",
        }
        return "".join(special_chars.get(ch, ch) for ch in text)

    @staticmethod
    def format_value(value: Any, full_precision: bool = False) -> str:
        """6 significant digits for reading, repr for machine-checkable output"""
        if value is None:
            return ""
        if isinstance(value, bool):
            return str(value).lower()
        if isinstance(value, float):
            if full_precision or math.isinf(value) or math.isnan(value):
                return repr(value)
            return f"{value:.6g}"
        return str(getattr(value, "value", value))

    @classmethod
    def render(cls, columns: Sequence[str], rows: Sequence[Sequence[Any]], fmt: str = "table", title: str = "") -> str:
        """
        Render rows in one of FORMATS

        Args:
            columns: Column names, in output order
            rows: Row values aligned with columns
            fmt: "table", "csv" or "latex"
            title: Optional caption (ignored for csv)

        Returns:
            Rendered text
        """
        if fmt not in FORMATS:
            raise ParameterError(f"Unknown output format {fmt!r}; expected one of {', '.join(FORMATS)}")

        if fmt == "csv":
            buffer = io.StringIO()
            writer = csv.writer(buffer, lineterminator="\n")
            writer.writerow(columns)
            for row in rows:
                writer.writerow([cls.format_value(v, full_precision=True) for v in row])
            return buffer.getvalue()

        cells = [[cls.format_value(v) for v in row] for row in rows]
        if fmt == "latex":
            return cls._env.get_template("latex").render(
                title=cls.escape_latex(title),
                spec="r" * len(columns),
                header=" & ".join(cls.escape_latex(c) for c in columns),
                lines=[" & ".join(cls.escape_latex(c) for c in row) for row in cells],
            )

        widths = [max([len(c)] + [len(row[i]) for row in cells]) for i, c in enumerate(columns)]
        return cls._env.get_template("table").render(
            title=title,
            header="  ".join(c.rjust(w) for c, w in zip(columns, widths)),
            rule="  ".join("-" * w for w in widths),
            lines=["  ".join(v.rjust(w) for v, w in zip(row, widths)) for row in cells],
        )

    @classmethod
    def analysis(cls, rows: List[AnalysisRow], fmt: str = "table") -> str:
        return cls.render(AnalysisRow.COLUMNS, [r.values() for r in rows], fmt, title="Guaranteed gain by reward ratio")

    @classmethod
    def verification(cls, report: VerificationReport, fmt: str = "table") -> str:
        rows = [
            (p.R, p.delta_numeric, p.delta_closed, p.eta_numeric, p.eta_closed, p.deviation,
             "FAIL" if p.deviation > report.tol else "ok")
            for p in report.points
        ]
        title = f"Numeric minimax vs closed form (tol {report.tol:g})"
        return cls.render(VERIFY_COLUMNS, rows, fmt, title=title)

    @classmethod
    def experiments(cls, stats: Sequence[Any], fmt: str = "table") -> str:
        rows = [
            (s.spec.R, s.alice_strategy, s.bob_strategy, s.games, s.settled, s.mean_bob_gain, s.mean_alice_gain,
             s.stddev_bob_gain, s.stderr_bob_gain, s.analytic_reference, s.z_score,
             s.canceled_rate, s.disputed_rate, s.advisory_ratio, s.verdict.verdict)
            for s in stats
        ]
        return cls.render(STATS_COLUMNS, rows, fmt, title="Monte Carlo experiments")

    @classmethod
    def outcome_counts(cls, stats: Any, fmt: str = "table") -> str:
        rows = [(name, count) for name, count in stats.counts.items()]
        return cls.render(("outcome", "count"), rows, fmt, title="Outcome counts")

    @classmethod
    def scaling(cls, report: Any, fmt: str = "table") -> str:
        rows = [(p.games, p.sessions, p.mean_total, p.stddev_total) for p in report.points]
        title = f"Session scaling at R={report.R:g}: stddev exponent {report.stddev_exponent:.3f}"
        return cls.render(SCALING_COLUMNS, rows, fmt, title=title)
