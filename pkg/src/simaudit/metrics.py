"""Confusion-matrix metrics for evaluation runs."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class EvalMetrics:
    tp: int
    tn: int
    fp: int
    fn: int
    precision: float | None
    recall: float | None
    f1: float | None
    accuracy: float | None

    @classmethod
    def from_counts(cls, tp: int, tn: int, fp: int, fn: int) -> "EvalMetrics":
        """Derive the four rates; any division by zero is undefined (None),
        never reported as 0."""
        precision = tp / (tp + fp) if (tp + fp) > 0 else None
        recall = tp / (tp + fn) if (tp + fn) > 0 else None
        total = tp + tn + fp + fn
        accuracy = (tp + tn) / total if total > 0 else None
        if precision is None or recall is None or (precision + recall) == 0:
            f1 = None
        else:
            f1 = 2 * precision * recall / (precision + recall)
        return cls(tp=tp, tn=tn, fp=fp, fn=fn, precision=precision,
                   recall=recall, f1=f1, accuracy=accuracy)

    def to_dict(self) -> dict:
        return {
            "tp": self.tp, "tn": self.tn, "fp": self.fp, "fn": self.fn,
            "precision": self.precision, "recall": self.recall,
            "f1": self.f1, "accuracy": self.accuracy,
        }

    def render_table(self) -> str:
        def fmt(x: float | None) -> str:
            return "n/a" if x is None else f"{x:.4f}"

        rows = [
            ("tp", str(self.tp)), ("tn", str(self.tn)),
            ("fp", str(self.fp)), ("fn", str(self.fn)),
            ("precision", fmt(self.precision)), ("recall", fmt(self.recall)),
            ("f1", fmt(self.f1)), ("accuracy", fmt(self.accuracy)),
        ]
        width = max(len(name) for name, _ in rows)
        return "\n".join(f"{name.ljust(width)}  {value}" for name, value in rows)
