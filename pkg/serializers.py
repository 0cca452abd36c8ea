"""Encoders from domain values to record fields, and the json / csv / text writers."""
import json
from fractions import Fraction
from typing import Any, Dict, Iterable, List, Optional

import mpmath
import pandas as pd

from models import EventuallyPeriodicBits, OmegaHatResult, OrbitResult, TwoAdicWord
from schemas import OutputRecord

REAL_DIGITS = 20


def encode_rational(x) -> str:
    x = Fraction(x)
    return f"{x.numerator}/{x.denominator}"


def encode_bits(b: EventuallyPeriodicBits) -> Dict[str, str]:
    return {
        "preperiod": "".join(str(bit) for bit in b.preperiod),
        "period": "".join(str(bit) for bit in b.period),
    }


def encode_word(w: TwoAdicWord) -> Dict[str, int]:
    return {"residue": w.residue, "precision": w.precision}


def encode_real(value, error_bound=None) -> Optional[Dict[str, str]]:
    if value is None:
        return None
    return {
        "value": mpmath.nstr(value, REAL_DIGITS),
        "error_bound": mpmath.nstr(error_bound, 6) if error_bound is not None else "inf",
    }


def encode_orbit(result: OrbitResult) -> Dict[str, Any]:
    return {
        "states": [encode_rational(s) for s in result.states],
        "parity_bits": "".join(str(t) for t in result.parity_bits),
        "cycle": {"entry_index": result.cycle[0], "cycle_length": result.cycle[1]} if result.cycle else None,
        "budget_exhausted": result.budget_exhausted,
        "overflowed": result.overflowed,
    }


def encode_omega_hat(result: OmegaHatResult) -> Dict[str, Any]:
    return {
        "status": result.status.value,
        "value": encode_real(result.value, result.error_bound),
        "exact_value": encode_rational(result.exact_value) if result.exact_value is not None else None,
        "terms_used": result.terms_used,
        "steps_used": result.steps_used,
        "density_seen": encode_rational(result.density_seen),
        "min_window_density": encode_rational(result.min_window_density) if result.min_window_density is not None else None,
        "witness_index": result.witness_index,
        "certificate": result.certificate,
        "notes": list(result.notes),
    }


def render_json(records: Iterable[OutputRecord]) -> str:
    return "".join(record.model_dump_json() + "\n" for record in records)


def _flat_rows(records: Iterable[OutputRecord]) -> List[Dict[str, Any]]:
    rows = []
    for record in records:
        row = json.loads(record.model_dump_json())
        # lists do not flatten; keep them as compact json strings
        for section in ("inputs", "results"):
            for key, value in row[section].items():
                if isinstance(value, list):
                    row[section][key] = json.dumps(value, separators=(",", ":"))
        rows.append(row)
    return rows


def render_csv(records: Iterable[OutputRecord]) -> str:
    frame = pd.json_normalize(_flat_rows(records))
    return frame.to_csv(index=False, lineterminator="\n")


def render_text(records: Iterable[OutputRecord]) -> str:
    frame = pd.json_normalize(_flat_rows(records))
    if frame.empty:
        return ""
    frame.columns = [c.split(".", 1)[-1] if c.startswith(("results.", "inputs.")) else c for c in frame.columns]
    return frame.to_string(index=False) + "\n"


def render_table1_text(rows) -> str:
    """x | Omega(x) in Z_2 | Omega-hat(x) in R, one line per x."""
    frame = pd.DataFrame(
        {
            "x": [row.x for row in rows],
            "Omega_{5,1}(x) in Z_2": [row.omega for row in rows],
            "Omega-hat_{5,1}(x) in R": [row.omega_hat for row in rows],
        }
    )
    return frame.to_string(index=False) + "\n"


RENDERERS = {
    "json": render_json,
    "csv": render_csv,
    "text": render_text,
}
