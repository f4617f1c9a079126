#!/usr/bin/env python3
"""Generate the frozen benchmark and pipeline fixtures.

Deterministic (fixed seed).  Produces:

  fixtures/bench/dataset_198.csv   198 synthetic rows (53 POL voltage,
                                   86 internal isolation, 59 external
                                   isolation) with the out-of-range counts
                                   implied by the derived GPT-4 confusion
                                   matrices (10/3/3) and heterogeneous
                                   measured/limit syntax.
  fixtures/bench/replay_gpt4.jsonl Replay fixture realizing exactly the
                                   derived GPT-4 matrices on that dataset.
  fixtures/reports/*.json          10-report batch with 3 seeded anomalies.
  fixtures/reports_demo/*.json     Worked single-report example.

Run scripts/derive_confusion.py first; this script reads its output.
"""

from __future__ import annotations

import csv
import json
import random
import sys
from decimal import Decimal
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from boardcheck import llm  # noqa: E402
from boardcheck.bench import BenchRow, truth_verdict  # noqa: E402
from boardcheck.compliance import Verdict  # noqa: E402

SEED = 20230615

TRUE_TEXTS = [
    "True. The measured value lies within the acceptance range.",
    "True — the observation satisfies the stated limits.",
    "True. Comparing the value against the range shows it is compliant.",
]
FALSE_TEXTS = [
    "False. The measured value falls outside the acceptance range.",
    "False — the observation violates the stated limits.",
    "False. The value does not satisfy the given range.",
]


def q3(value: float) -> str:
    return str(Decimal(value).quantize(Decimal("0.001")))


def make_pol_rows(rng: random.Random, count: int, positives: int) -> "list[BenchRow]":
    rows = []
    positive_slots = set(rng.sample(range(count), positives))
    for i in range(count):
        low = rng.uniform(0.9, 4.8)
        width = rng.uniform(0.05, 0.25)
        a, b = q3(low), q3(low + width)
        fmt = i % 4
        if fmt == 0:
            limits = f"[{a}, {b}] V"
        elif fmt == 1:
            limits = f"{a} - {b} V"
        elif fmt == 2:
            limits = f"[{a}, {b}]"
        else:
            limits = f"[{a},{b}] V"
        out_of_range = i in positive_slots
        if out_of_range:
            value = Decimal(b) + Decimal(q3(rng.uniform(0.05, 0.4)))
        else:
            value = Decimal(a) + (Decimal(b) - Decimal(a)) * Decimal(rng.randint(0, 10)) / 10
        # Cross-prefix measured only where the limits carry a unit.
        if fmt == 1 and not out_of_range:
            measured = f"{(value * 1000).quantize(Decimal('1'))} mV"
        elif fmt == 3:
            measured = f"{value} V"
        else:
            measured = str(value)
        rows.append(
            BenchRow(
                id=f"POL-{i + 1:03d}",
                test_type="POL Voltage",
                measured_raw=measured,
                limits_raw=limits,
                success_raw="OK" if not out_of_range else "-",
            )
        )
    return rows


def make_isolation_rows(
    rng: random.Random, count: int, positives: int, prefix: str, test_type: str
) -> "list[BenchRow]":
    rows = []
    positive_slots = set(rng.sample(range(count), positives))
    for i in range(count):
        fmt = i % 3
        out_of_range = i in positive_slots
        if fmt == 0:
            a = Decimal(rng.randint(9, 14)) / 10
            b = a + Decimal(rng.randint(4, 9)) / 10
            limits = f"{a}M - {b}MΩ"
            if out_of_range:
                value = b + Decimal(rng.randint(2, 9)) / 10
            else:
                value = a + (b - a) * Decimal(rng.randint(0, 10)) / 10
            style = i % 2
            if style == 0:
                measured = f"{value}MΩ"
            else:
                measured = f"{(value * 1000).quantize(Decimal('1'))} kΩ"
        elif fmt == 1:
            bound = rng.choice([100, 200, 500])
            limits = f"≥ {bound} MΩ"
            if out_of_range:
                value = Decimal(rng.randint(10, bound - 5))
            else:
                value = Decimal(rng.randint(bound + 5, bound * 3))
            # Unit of measure absent: bare value adopts the limits' MΩ.
            measured = str(value)
        else:
            a = Decimal(rng.randint(10, 40))
            b = a + Decimal(rng.randint(5, 20))
            limits = f"[{a}, {b}] MΩ"
            if out_of_range:
                value = a - Decimal(rng.randint(1, 5))
            else:
                value = rng.choice([a, b, (a + b) / 2])  # include exact bounds
            measured = f"{value} MΩ"
        rows.append(
            BenchRow(
                id=f"{prefix}-{i + 1:03d}",
                test_type=test_type,
                measured_raw=measured,
                limits_raw=limits,
                success_raw="OK" if not out_of_range else "-",
            )
        )
    return rows


def write_dataset(rows: "list[BenchRow]", path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "test_type", "measured_raw", "limits_raw", "success_raw"])
        for row in rows:
            writer.writerow([row.id, row.test_type, row.measured_raw, row.limits_raw, row.success_raw])


def write_replay(rows: "list[BenchRow]", matrices: dict, path: Path) -> None:
    """Realize the derived per-type confusion matrices as replay responses.

    Within each test type, the first `fn` out-of-range rows are answered
    "True" (misses) and the first `fp` in-range rows are answered "False"
    (false alarms); everything else is answered correctly.
    """
    records = []
    counters: "dict[str, dict[str, int]]" = {}
    for index, row in enumerate(rows):
        matrix = matrices[row.test_type]
        state = counters.setdefault(row.test_type, {"fn": 0, "fp": 0})
        actual_positive = truth_verdict(row) is Verdict.OUT_OF_RANGE
        if actual_positive:
            answer_in_range = state["fn"] < matrix["fn"]
            if answer_in_range:
                state["fn"] += 1
        else:
            answer_in_range = not (state["fp"] < matrix["fp"])
            if not answer_in_range:
                state["fp"] += 1
        texts = TRUE_TEXTS if answer_in_range else FALSE_TEXTS
        response = texts[index % len(texts)]
        prompt = llm.build_prompt(row.measured_raw, row.limits_raw)
        records.append({"prompt_hash": llm.prompt_hash(prompt), "response_text": response})
    for test_type, state in counters.items():
        expected = matrices[test_type]
        if state["fn"] != expected["fn"] or state["fp"] != expected["fp"]:
            raise SystemExit(
                f"{test_type}: dataset cannot realize matrix {expected} (got {state})"
            )
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Report batch


def pol_table(rows: "list[list]", title: str = "P.O.L. Voltage Verification") -> dict:
    return {
        "title": title,
        "headers": ["V. Cores", "Voltage Measurements [V]", "Acceptance limits", "Successful"],
        "rows": rows,
    }


def isolation_table(rows: "list[list]", internal: bool = True) -> dict:
    table = {
        "title": "Internal Isolation" if internal else "External Isolation",
        "headers": ["Circuit", "Resistance Measurements", "Expected Values", "Successful"],
        "rows": rows,
    }
    return table


def report(reference: str, tables: "list[dict]", date: str = "2023-07-10") -> dict:
    return {
        "reference": reference,
        "name": f"test_report_{reference.lower().replace('-', '_')}",
        "date": date,
        "location": f"archive/{reference}.docx",
        "tables": tables,
    }


def make_reports(rng: random.Random) -> "dict[str, dict]":
    reports: "dict[str, dict]" = {}

    def pol_rows(n: int, start: int = 1) -> "list[list]":
        rows = []
        for i in range(n):
            low = rng.uniform(1.0, 4.5)
            a, b = q3(low), q3(low + rng.uniform(0.08, 0.3))
            value = q3(float(Decimal(a) + (Decimal(b) - Decimal(a)) / 2))
            rows.append([f"Core{start + i}", value, f"[{a}, {b}] V", "OK"])
        return rows

    def iso_rows(n: int) -> "list[list]":
        rows = []
        for i in range(n):
            a = Decimal(rng.randint(10, 13)) / 10
            b = a + Decimal(rng.randint(5, 8)) / 10
            value = a + (b - a) / 2
            rows.append([f"P{i + 1}-P{i + 2}", f"{value}MΩ", f"{a}M - {b}MΩ", "OK"])
        return rows

    reports["TASI-2001"] = report(
        "TASI-2001",
        [
            pol_table(pol_rows(3)),
            {
                "title": "Internal Isolation",
                "headers": ["Circuit", "Resistance Measurements", "Expected Values", "Successful"],
                "rows": [
                    ["P1-P2", "1.5MΩ", "1.1M - 1.9MΩ", "OK"],
                    ["P2-P3", "1.6MΩ", None, "OK"],
                ],
            },
        ],
    )
    reports["TASI-2002"] = report(
        "TASI-2002",
        [
            {
                "title": "External Isolation",
                "headers": ["Circuit", "Resistance Measurements [MΩ]", "Acceptance limits"],
                "rows": [
                    ["Case-P1", "155", "≥ 100 MΩ"],
                    ["Case-P2", "240", "≥ 100 MΩ"],
                ],
                "table_level_success": "OK",
            }
        ],
    )
    # Seeded anomaly: measured value in range but the mark says otherwise.
    anomaly_rows = pol_rows(3)
    anomaly_rows[1][3] = "-"
    reports["TASI-2003"] = report("TASI-2003", [pol_table(anomaly_rows)])
    reports["TASI-2004"] = report(
        "TASI-2004",
        [
            {
                "title": "Preliminary Power Consumption",
                "headers": ["Rail", "Power Measurements [W]", "Expected Values", "Successful"],
                "rows": [
                    ["28V main", "0.52", "[0.45, 0.60] W", "OK"],
                    ["28V redundant", "0.49", "[0.45, 0.60] W", "OK"],
                ],
            }
        ],
    )
    # Seeded anomaly: out-of-range resistance marked successful.
    reports["TASI-2005"] = report(
        "TASI-2005",
        [
            isolation_table(
                [
                    ["P1-P2", "1.5MΩ", "1.1M - 1.9MΩ", "OK"],
                    ["P2-P3", "2.4MΩ", "1.1M - 1.9MΩ", "OK"],
                ]
            )
        ],
    )
    reports["TASI-2006"] = report(
        "TASI-2006",
        [
            {
                "title": "Point of load verification sheet",
                "test_type_hint": "POLVoltage",
                "headers": ["V. Cores", "Voltage Measurements [V]", "Acceptance limits", "Successful"],
                "rows": pol_rows(4),
            }
        ],
    )
    reports["TASI-2007"] = report("TASI-2007", [pol_table(pol_rows(2), title="P.O.L. Voltage checks [V]")])
    # Seeded anomaly: acceptance limits cell that no grammar accepts.
    reports["TASI-2008"] = report(
        "TASI-2008",
        [
            {
                "title": "External Isolation",
                "headers": ["Circuit", "Resistance Measurements", "Expected Values", "Successful"],
                "rows": [
                    ["Case-P1", "180 MΩ", "≥ 100 MΩ", "OK"],
                    ["Case-P2", "175 MΩ", "approx 100 MΩ", "OK"],
                ],
            }
        ],
    )
    reports["TASI-2009"] = report("TASI-2009", [isolation_table(iso_rows(3))])
    reports["TASI-2010"] = report("TASI-2010", [pol_table(pol_rows(3)), isolation_table(iso_rows(2))])

    demo = report("TASI-1234", [], date="2023-06-15")
    demo["name"] = "test_report_xy"
    demo["location"] = "path/to/test_report_file.docx"
    demo["tables"] = [
        pol_table(
            [
                ["Core1", "1.097", "[1.076, 1.224] V", "OK"],
                ["Core2", "3.301", "[3.198, 3.532] V", "OK"],
            ]
        ),
        isolation_table(
            [
                ["P1-P2", "1.5MΩ", "1.1M - 1.9MΩ", "OK"],
                ["P2-P3", "1500 kΩ", "1.1M - 1.9MΩ", "OK"],
            ]
        ),
    ]
    reports["TASI-1234"] = demo
    return reports


def main() -> None:
    derived = json.loads((ROOT / "fixtures" / "derived_confusion.json").read_text())
    positives = derived["implied_positives"]
    gpt4 = derived["models"]["GPT-4"]["per_type"]

    rng = random.Random(SEED)
    rows = (
        make_pol_rows(rng, 53, positives["POL Voltage"])
        + make_isolation_rows(rng, 86, positives["Internal Isolation"], "IST", "Internal Isolation")
        + make_isolation_rows(rng, 59, positives["External Isolation"], "EST", "External Isolation")
    )
    assert len(rows) == 198
    write_dataset(rows, ROOT / "fixtures" / "bench" / "dataset_198.csv")
    write_replay(rows, gpt4, ROOT / "fixtures" / "bench" / "replay_gpt4.jsonl")
    print("wrote dataset_198.csv and replay_gpt4.jsonl")

    rng = random.Random(SEED + 1)
    reports = make_reports(rng)
    batch_dir = ROOT / "fixtures" / "reports"
    demo_dir = ROOT / "fixtures" / "reports_demo"
    batch_dir.mkdir(parents=True, exist_ok=True)
    demo_dir.mkdir(parents=True, exist_ok=True)
    for reference, document in reports.items():
        target = demo_dir if reference == "TASI-1234" else batch_dir
        path = target / f"{reference}.json"
        path.write_text(json.dumps(document, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    print(f"wrote {len(reports) - 1} batch reports and 1 demo report")


if __name__ == "__main__":
    main()
