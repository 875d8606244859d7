"""voterlab <suite> --config PATH --seed N --out DIR [--threads K] [--dump-log]"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import SUITES, ConfigError, parse_config
from .report import emit_report
from .suites import RUNNERS, RunContext, SuiteAbort, SuiteResult

log = logging.getLogger("voterlab")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="voterlab", description="Voter-model experiment suites.")
    p.add_argument("suite", choices=SUITES)
    p.add_argument("--config", required=True, type=Path, help="key = value config file")
    p.add_argument("--seed", type=int, default=None, help="master seed (u64); overrides the config")
    p.add_argument("--out", type=Path, default=None, help="output directory")
    p.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
    p.add_argument("--dump-log", action="store_true", help="write a binary event log for replay")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = parse_config(args.config)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if cfg.suite != args.suite:
        print(f"config error: config is for suite {cfg.suite!r}, not {args.suite!r}", file=sys.stderr)
        return 2
    seed = args.seed if args.seed is not None else (cfg.seed if cfg.seed is not None else 0)
    if not 0 <= seed < 2**64:
        print("seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 2
    out = args.out or (Path(cfg.out) if cfg.out else None)
    if out is None:
        print("no output directory: pass --out or set 'out' in the config", file=sys.stderr)
        return 2
    out.mkdir(parents=True, exist_ok=True)
    ctx = RunContext(cfg, seed, max(1, args.threads), out, args.dump_log)
    extra = {}
    try:
        result = RUNNERS[cfg.suite](ctx)
    except SuiteAbort as exc:
        result = SuiteResult(cfg.suite, cfg.config_hash(), seed, failures=[str(exc)])
        extra["abort"] = exc.detail
    path = emit_report(result, out, extra)
    status = "PASS" if result.passed else "FAIL"
    print(f"{cfg.suite}: {status} ({path})")
    for msg in result.failures:
        print(f"  - {msg}")
    return 0 if result.passed else 1


if __name__ == "__main__":
    sys.exit(main())
