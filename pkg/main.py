import argparse
import logging
import sys
from fractions import Fraction
from pathlib import Path
from typing import List, Optional

import config
from exceptions import CollatzArtifactError, UsageError
from models import MapParams, TwoAdicWord
from schemas import OutputRecord, ParamsRecord, ScanReport, Table1Row
from serializers import (
    RENDERERS,
    encode_bits,
    encode_omega_hat,
    encode_orbit,
    encode_rational,
    encode_word,
    render_table1_text,
)
from services.analysis import (
    IdentitySuite,
    OmegaHatScanner,
    PermutationAnalyzer,
    RationalPairScanner,
    table1,
)
from services.collatz import nu_estimate, orbit, q_exact, q_truncated
from services.conjugacy import (
    omega_exact,
    omega_hat,
    omega_truncated,
    phi_exact,
    phi_truncated,
    theorem1_scale,
    two_adic_prefix,
)
from services.exactnum import (
    bits_to_rational,
    max_admissible_bound,
    parse_rational,
    rational_reconstruct,
    rational_to_bits,
    residue_of,
)

logger = logging.getLogger("services")

DEFAULT_NU_WINDOW = 1000
DEFAULT_IDENTITY_K = 64
DEFAULT_PAIRS_XS = "1:100"


def _record(args, results, status, **inputs) -> OutputRecord:
    return OutputRecord(
        command=args.command,
        params=ParamsRecord(m=args.m, r=args.r),
        inputs={key: value for key, value in inputs.items() if value is not None},
        results=results,
        status=status,
    )


def _params(args) -> MapParams:
    return MapParams(args.m, args.r)


def _require_x(args) -> Fraction:
    if args.x is None:
        raise UsageError(f"{args.command} needs --x")
    return parse_rational(args.x)


def _require_k(args) -> int:
    if args.k is None:
        raise UsageError(f"{args.command} needs --k")
    return args.k


def _parse_xs(text: str) -> List[Fraction]:
    if ":" in text:
        parts = text.split(":")
        if len(parts) not in (2, 3):
            raise UsageError(f"malformed range {text!r}; expected lo:hi or lo:hi:step")
        try:
            lo, hi, *rest = (int(part) for part in parts)
        except ValueError:
            raise UsageError(f"malformed range {text!r}; bounds must be integers")
        step = rest[0] if rest else 1
        if step < 1:
            raise UsageError(f"range step must be positive, got {step}")
        return [Fraction(v) for v in range(lo, hi + 1, step)]
    return [parse_rational(part) for part in text.split(",") if part.strip()]


def _scan_records(args, report: ScanReport) -> List[OutputRecord]:
    records = [_record(args, item.evidence, item.verdict, x=item.input) for item in report.items]
    records.append(_record(
        args,
        {
            "kind": report.kind,
            "sample": report.sample,
            "counts": report.counts.model_dump(),
            "statuses": report.statuses,
            "summary": report.summary,
            "witnesses": [witness.input for witness in report.witnesses],
        },
        "summary",
    ))
    return records


def handle_orbit(args):
    budget = args.budget or config.CYCLE_PROBE_BUDGET
    x = _require_x(args)
    result = orbit(_params(args), x, budget)
    status = "cycle" if result.is_cyclic else "budget_exhausted"
    return [_record(args, encode_orbit(result), status, x=encode_rational(x), budget=budget)]


def handle_q(args):
    p = _params(args)
    x = _require_x(args)
    if args.k is not None:
        word = q_truncated(p, x, args.k)
        return [_record(args, {"q": encode_word(word)}, "truncated", x=encode_rational(x), k=args.k)]

    budget = args.budget or config.ORBIT_BUDGET
    bits = q_exact(p, x, budget)
    if bits is None:
        return [_record(args, {}, "budget_exhausted", x=encode_rational(x), budget=budget)]
    results = {"q": encode_rational(bits_to_rational(bits)), "bits": encode_bits(bits)}
    return [_record(args, results, "exact", x=encode_rational(x), budget=budget)]


def handle_phi(args):
    p = _params(args)
    x = _require_x(args)
    if args.k is not None:
        word = phi_truncated(p, residue_of(x, args.k))
        return [_record(args, {"phi": encode_word(word)}, "truncated", x=encode_rational(x), k=args.k)]
    bits = rational_to_bits(x)
    results = {"phi": encode_rational(phi_exact(p, bits)), "bits": encode_bits(bits)}
    return [_record(args, results, "exact", x=encode_rational(x))]


def handle_omega(args):
    p = _params(args)
    x = _require_x(args)
    budget = args.budget or config.ORBIT_BUDGET
    value = omega_exact(p, x, budget)
    if value is not None:
        return [_record(args, {"omega": encode_rational(value)}, "exact", x=encode_rational(x), budget=budget)]

    k = args.k or config.TABLE1_PREFIX_BITS
    prefix = residue_of(omega_truncated(p, x, k), k)
    results = {"omega_prefix": encode_word(prefix), "two_adic": two_adic_prefix(prefix)}
    return [_record(args, results, "budget_exhausted", x=encode_rational(x), budget=budget)]


def handle_omega_k(args):
    p = _params(args)
    x = _require_x(args)
    k = _require_k(args)
    value = omega_truncated(p, x, k)
    results = {"omega_k": encode_rational(value), "residue": encode_word(residue_of(value, k))}
    return [_record(args, results, "exact", x=encode_rational(x), k=k)]


def handle_omega_hat(args):
    p = _params(args)
    x = _require_x(args)
    budget = args.budget or config.OMEGA_HAT_BUDGET
    result = omega_hat(p, x, args.tolerance, budget)
    return [_record(args, encode_omega_hat(result), result.status.value,
                    x=encode_rational(x), tolerance=args.tolerance, budget=budget)]


def handle_nu(args):
    p = _params(args)
    x = _require_x(args)
    window = args.k or DEFAULT_NU_WINDOW
    budget = args.budget or config.CYCLE_PROBE_BUDGET
    estimate = nu_estimate(p, x, window, budget)
    results = {"nu": encode_rational(estimate.value), "exact": estimate.exact, "window": estimate.window}
    return [_record(args, results, "exact" if estimate.exact else "window_average", x=encode_rational(x), k=window)]


def handle_qbar(args):
    table = PermutationAnalyzer().qbar_table(_params(args), _require_k(args))
    results = table.model_dump(exclude={"params"})
    return [_record(args, results, "permutation" if table.bijective else "not_permutation", k=table.k)]


def handle_table1(args):
    rows = table1(args.tolerance)
    args.m, args.r = config.TABLE1_PARAMS
    return [_record(args, row.model_dump(), row.omega_hat_status, x=row.x) for row in rows]


def handle_identities(args):
    suite = IdentitySuite(orbit_budget=args.budget or config.IDENTITY_ORBIT_BUDGET)
    k_max = args.k or DEFAULT_IDENTITY_K
    grid = config.DEFAULT_GRID if args.grid else [(args.m, args.r)]
    records = []
    for m, r in grid:
        args.m, args.r = m, r
        report = suite.run(MapParams(m, r), args.samples, k_max, args.seed, args.workers)
        for witness in report.witnesses:
            records.append(_record(args, witness.evidence, witness.verdict, x=witness.input))
        results = {
            "sample": report.sample,
            "counts": report.counts.model_dump(),
            "checks": {name: tally.model_dump() for name, tally in report.checks.items()},
        }
        status = "refuted" if report.counts.refuted else "confirmed"
        records.append(_record(args, results, status, samples=args.samples, k=k_max, seed=args.seed))
    return records


def handle_scan_pairs(args):
    xs = _parse_xs(args.xs) if args.xs else ([_require_x(args)] if args.x else _parse_xs(DEFAULT_PAIRS_XS))
    scanner = RationalPairScanner(
        orbit_budget=args.budget or config.ORBIT_BUDGET,
        k_probe=args.k or config.SCAN_PAIRS_K_PROBE,
        recon_bound=args.bound,
    )
    return _scan_records(args, scanner.scan(_params(args), xs, args.workers))


def handle_scan_hat(args):
    if args.xs:
        xs = _parse_xs(args.xs)
    elif args.x:
        xs = [_require_x(args)]
    else:
        xs = [Fraction(v) for v in config.SCAN_HAT_XS]
    scanner = OmegaHatScanner(args.tolerance, args.budget or config.OMEGA_HAT_BUDGET)
    return _scan_records(args, scanner.scan(_params(args), xs, args.workers))


def handle_bits(args):
    x = _require_x(args)
    bits = rational_to_bits(x)
    results = {"bits": encode_bits(bits)}
    if args.k is not None:
        results["truncated"] = encode_word(residue_of(x, args.k))
    return [_record(args, results, "exact", x=encode_rational(x))]


def handle_reconstruct(args):
    x = _require_x(args)
    k = _require_k(args)
    if x.denominator != 1 or not 0 <= x.numerator < 1 << k:
        raise UsageError(f"--x must be a residue in 0..2^{k}-1 for reconstruct")
    bound = args.bound or max_admissible_bound(k)
    found = rational_reconstruct(TwoAdicWord(x.numerator, k), bound)
    results = {"rational": encode_rational(found) if found is not None else None}
    return [_record(args, results, "found" if found is not None else "not_found", x=x.numerator, k=k, bound=bound)]


def handle_scale(args):
    omega_x = _require_x(args)
    value = theorem1_scale(_params(args), omega_x, args.n)
    return [_record(args, {"omega_scaled": encode_rational(value)}, "exact", omega_x=encode_rational(omega_x), n=args.n)]


COMMANDS = {
    "orbit": (handle_orbit, "iterate T_{m,r} with cycle detection"),
    "q": (handle_q, "parity vector Q_{m,r}(x), exact or first k bits"),
    "phi": (handle_phi, "inverse encoding Phi_{m,r}, exact or mod 2^k"),
    "omega": (handle_omega, "autoconjugacy Omega_{m,r}(x) as an exact rational"),
    "omega-k": (handle_omega_k, "truncated autoconjugacy Omega_{k,m,r}(x)"),
    "omega-hat": (handle_omega_hat, "real limit of Omega_k(x)"),
    "nu": (handle_nu, "density of even iterates"),
    "qbar": (handle_qbar, "Q-bar_k permutation table and its order"),
    "table1": (handle_table1, "values of Omega_{5,1} and Omega-hat_{5,1} for small integers"),
    "identities": (handle_identities, "randomised identity suite"),
    "scan-pairs": (handle_scan_pairs, "rational-pairs conjecture scanner"),
    "scan-hat": (handle_scan_hat, "Omega-hat existence scanner"),
    "bits": (handle_bits, "eventually periodic 2-adic expansion of a rational"),
    "reconstruct": (handle_reconstruct, "rational from a residue mod 2^k"),
    "scale": (handle_scale, "Omega(2^n x) from Omega(x)"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--m", type=int, default=config.DEFAULT_M)
    common.add_argument("--r", type=int, default=config.DEFAULT_R)
    common.add_argument("--x", help="rational 'a/b' or integer; write --x=-a/b for negative fractions")
    common.add_argument("--xs", help="comma separated rationals, or an integer range lo:hi[:step]")
    common.add_argument("--k", type=int)
    common.add_argument("--n", type=int, default=1)
    common.add_argument("--budget", type=int)
    common.add_argument("--tolerance", type=float, default=config.OMEGA_HAT_TOLERANCE)
    common.add_argument("--bound", type=int)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--samples", type=int, default=1000)
    common.add_argument("--grid", action="store_true", help="run over the default (m, r) grid")
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--format", choices=sorted(RENDERERS), default="json")
    common.add_argument("--out", help="write records to this file instead of stdout")
    common.add_argument("--verbose", action="store_true")

    parser = argparse.ArgumentParser(
        prog="collatz-omega",
        description="Exact 2-adic toolkit for the generalized Collatz map T_{m,r} and its autoconjugacy.",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, (handler, help_text) in COMMANDS.items():
        subparser = subparsers.add_parser(name, parents=[common], help=help_text)
        subparser.set_defaults(handler=handler)
    return parser


def configure_logging(verbose: bool):
    # run() may be called repeatedly in one process; drop handlers bound to an earlier stderr
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(asctime)s - %(levelname)s - %(message)s"))
    logger.addHandler(handler)
    logger.setLevel(logging.DEBUG if verbose else logging.WARNING)


def run(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2

    configure_logging(args.verbose)
    try:
        records = args.handler(args)
    except CollatzArtifactError as exc:
        print(f"error: {exc.detail}", file=sys.stderr)
        return exc.exit_code

    if args.command == "table1" and args.format == "text":
        output = render_table1_text([Table1Row(**record.results) for record in records])
    else:
        output = RENDERERS[args.format](records)

    if args.out:
        Path(args.out).write_text(output)
    else:
        sys.stdout.write(output)
    return 0


if __name__ == "__main__":
    sys.exit(run(sys.argv[1:]))
