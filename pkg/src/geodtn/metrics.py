"""Delivery ratio, latency and overhead computed from event logs."""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass

from .engine import CREATED, DELIVERED, EVICTED, EXPIRED, FORWARDED, REPLICATED, EventLog

CSV_COLUMNS = ("scheme", "seed", "generated", "delivered", "delivery_ratio", "avg_latency_s", "transmissions",
               "overhead_ratio", "extra_copies", "evictions", "expiries")


class MetricsError(ValueError):
    pass


class NoMessages(MetricsError):
    pass


class NothingDelivered(MetricsError):
    pass


def _first_deliveries(log) -> dict[int, float]:
    created = {}
    first = {}
    for e in log:
        if e.kind == CREATED:
            created[e.message] = e.time
        elif e.kind == DELIVERED and e.message not in first:
            first[e.message] = e.time - created[e.message]
    return first


def _generated(log) -> int:
    return sum(1 for e in log if e.kind == CREATED)


def delivery_ratio(log) -> float:
    generated = _generated(log)
    if generated == 0:
        raise NoMessages("no messages were generated")
    return len(_first_deliveries(log)) / generated


def avg_latency(log) -> float:
    first = _first_deliveries(log)
    if not first:
        raise NothingDelivered("no message was delivered")
    return sum(first.values()) / len(first)


def transmissions(log) -> int:
    return sum(1 for e in log if e.kind in (REPLICATED, FORWARDED, DELIVERED))


def overhead_ratio(log) -> float:
    """Relay transmissions per delivered message."""
    delivered = len(_first_deliveries(log))
    if delivered == 0:
        raise NothingDelivered("overhead ratio undefined without deliveries")
    return (transmissions(log) - delivered) / delivered


@dataclass(frozen=True)
class RunMetrics:
    scheme: str
    seed: int | None
    generated: int
    delivered: int
    total_transmissions: int
    delivery_ratio: float | None
    avg_delivery_latency: float | None
    overhead_ratio: float | None
    extra_copies: int
    evictions: int
    expiries: int

    def row(self) -> dict:
        return {
            "scheme": self.scheme,
            "seed": "" if self.seed is None else self.seed,
            "generated": self.generated,
            "delivered": self.delivered,
            "delivery_ratio": _fmt(self.delivery_ratio),
            "avg_latency_s": _fmt(self.avg_delivery_latency),
            "transmissions": self.total_transmissions,
            "overhead_ratio": _fmt(self.overhead_ratio),
            "extra_copies": self.extra_copies,
            "evictions": self.evictions,
            "expiries": self.expiries,
        }

    def as_dict(self) -> dict:
        return asdict(self)


def _fmt(value: float | None) -> str:
    return "" if value is None else repr(float(value))


def compute_metrics(log: EventLog, scheme: str = "", seed: int | None = None) -> RunMetrics:
    first = _first_deliveries(log)
    generated = _generated(log)
    delivered = len(first)
    sent = transmissions(log)
    return RunMetrics(
        scheme=str(scheme),
        seed=seed,
        generated=generated,
        delivered=delivered,
        total_transmissions=sent,
        delivery_ratio=delivered / generated if generated else None,
        avg_delivery_latency=sum(first.values()) / delivered if delivered else None,
        overhead_ratio=(sent - delivered) / delivered if delivered else None,
        extra_copies=sum(1 for e in log if e.extra),
        evictions=sum(1 for e in log if e.kind == EVICTED),
        expiries=sum(1 for e in log if e.kind == EXPIRED),
    )


def write_csv(rows, fh, extra_columns=()) -> None:
    """Write metric rows (dicts keyed by :data:`CSV_COLUMNS`, plus any extra leading columns)."""
    writer = csv.DictWriter(fh, fieldnames=list(extra_columns) + list(CSV_COLUMNS), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)


def metrics_csv(metrics: list[RunMetrics]) -> str:
    buf = io.StringIO()
    write_csv([m.row() for m in metrics], buf)
    return buf.getvalue()


def read_csv(text: str) -> list[dict]:
    """Rows with numeric fields parsed; empty fields become None."""
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        parsed = {}
        for k, v in row.items():
            if v == "":
                parsed[k] = None
            elif k in ("scheme",):
                parsed[k] = v
            else:
                try:
                    parsed[k] = int(v)
                except ValueError:
                    try:
                        parsed[k] = float(v)
                    except ValueError:
                        parsed[k] = v
        out.append(parsed)
    return out
