"""Command line front end: run analyses and emit auditable report bundles.

Subcommands: analyze, policy, model, geo, synth, validate. Every run
writes delimited reports plus a manifest echoing the configuration and
checksumming the inputs, so identical inputs, config, and seed reproduce
the bundle byte for byte. Exit codes: 0 success, 2 data or validation
failure, 3 configuration error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from . import __version__
from .errors import ConfigError, DataError, IngestError, ModelDomainError
from .geo import read_centroids
from .ingest import (
    FormatDescriptor,
    ingest_cvr,
    read_certified_totals,
    read_contest_specs,
    validate_against_canvass,
)
from .policy import CoarseningPolicy, NoisingSpec, RedactionPolicy
from .records import Election
from .reports import (
    AnalyzeOptions,
    GeoOptions,
    ModelOptions,
    ModelScenario,
    PolicyOptions,
    Report,
    run_analysis,
    run_geo,
    run_model,
    run_policy,
    sha256_file,
)
from .synth import SynthSpec, emit, generate
from .units import PRECINCT, Granularity, granularity_by_name
from .voterfile import link_voted_file, read_voted_file

EXIT_OK = 0
EXIT_DATA = 2
EXIT_CONFIG = 3

ABSTAIN_MODES = ("candidates_only", "count_all")

_CONFIG_KEYS = {
    "cvr", "descriptor", "contests", "certified", "voted_file",
    "granularities", "coalition_sizes", "thresholds", "abstain_mode",
    "exclude_style_types", "exclude_contests", "focus_contest",
    "size_cutoffs", "seed", "out_dir", "policy", "geo", "model",
}
_POLICY_KEYS = {"granularity", "k_max", "redaction", "coarsening", "noising"}
_GEO_KEYS = {
    "centroids", "radii", "planar", "include_residual", "contest",
    "granularity", "delimiter",
}
_MODEL_KEYS = {"scenarios", "tipping_thresholds"}
_VOTED_KEYS = {"path", "columns", "delimiter"}

_DEFAULT_VOTED_COLUMNS = {
    "voter_id": "voter_id",
    "name": "name",
    "precinct": "precinct",
    "ballot_style": "ballot_style",
    "vote_method": "vote_method",
}


@dataclass
class RunConfig:
    """Everything a subcommand needs, merged from the config file and flags."""

    cvr: Path | None = None
    descriptor: Path | dict | None = None
    contests: Path | None = None
    certified: Path | None = None
    voted_file: dict | None = None
    granularities: tuple[str, ...] = ()
    coalition_sizes: tuple[int, ...] = ()
    thresholds: tuple[float, ...] = ()
    abstain_mode: str = "candidates_only"
    exclude_style_types: tuple[str, ...] = ()
    exclude_contests: tuple[str, ...] = ()
    focus_contest: str | None = None
    size_cutoffs: tuple[int, ...] = (9, 29)
    seed: int = 0
    out_dir: Path | None = None
    policy: dict = field(default_factory=dict)
    geo: dict = field(default_factory=dict)
    model: dict = field(default_factory=dict)
    echo: dict = field(default_factory=dict)  # original file content, verbatim

    def __post_init__(self) -> None:
        if self.abstain_mode not in ABSTAIN_MODES:
            raise ConfigError(
                f"abstain_mode must be one of {ABSTAIN_MODES}, "
                f"got {self.abstain_mode!r}"
            )

    @property
    def count_all_abstain(self) -> bool:
        return self.abstain_mode == "count_all"

    def resolved_granularities(self) -> tuple[Granularity, ...]:
        return tuple(granularity_by_name(n) for n in self.granularities)

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"no such config file: {path}")
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(raw, base_dir=path.parent)

    @classmethod
    def from_dict(cls, raw: dict, base_dir: Path | None = None) -> "RunConfig":
        unknown = set(raw) - _CONFIG_KEYS
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        base = base_dir or Path(".")

        def path_of(value) -> Path:
            p = Path(value)
            return p if p.is_absolute() else base / p

        descriptor = raw.get("descriptor")
        if isinstance(descriptor, str):
            descriptor = path_of(descriptor)
        voted = raw.get("voted_file")
        if isinstance(voted, str):
            voted = {"path": voted}
        if voted is not None:
            unknown = set(voted) - _VOTED_KEYS
            if unknown:
                raise ConfigError(f"unknown voted_file fields: {sorted(unknown)}")
            voted = dict(voted)
            voted["path"] = path_of(voted["path"])
            voted.setdefault("columns", dict(_DEFAULT_VOTED_COLUMNS))
            voted.setdefault("delimiter", ",")
        for section, keys in (
            ("policy", _POLICY_KEYS), ("geo", _GEO_KEYS), ("model", _MODEL_KEYS),
        ):
            extra = set(raw.get(section, {})) - keys
            if extra:
                raise ConfigError(f"unknown {section} fields: {sorted(extra)}")
        policy = dict(raw.get("policy", {}))
        geo = dict(raw.get("geo", {}))
        for key in ("redaction", "coarsening", "noising"):
            if isinstance(policy.get(key), str):
                policy[key] = path_of(policy[key])
        if isinstance(geo.get("centroids"), str):
            geo["centroids"] = path_of(geo["centroids"])

        return cls(
            cvr=path_of(raw["cvr"]) if "cvr" in raw else None,
            descriptor=descriptor,
            contests=path_of(raw["contests"]) if "contests" in raw else None,
            certified=path_of(raw["certified"]) if "certified" in raw else None,
            voted_file=voted,
            granularities=tuple(raw.get("granularities", ())),
            coalition_sizes=tuple(raw.get("coalition_sizes", ())),
            thresholds=tuple(raw.get("thresholds", ())),
            abstain_mode=raw.get("abstain_mode", "candidates_only"),
            exclude_style_types=tuple(raw.get("exclude_style_types", ())),
            exclude_contests=tuple(raw.get("exclude_contests", ())),
            focus_contest=raw.get("focus_contest"),
            size_cutoffs=tuple(raw.get("size_cutoffs", (9, 29))),
            seed=int(raw.get("seed", 0)),
            out_dir=path_of(raw["out_dir"]) if "out_dir" in raw else None,
            policy=policy,
            geo=geo,
            model=dict(raw.get("model", {})),
            echo=raw,
        )

    def apply_overrides(self, args: argparse.Namespace) -> None:
        if args.seed is not None:
            self.seed = args.seed
        if args.out is not None:
            self.out_dir = Path(args.out)
        if args.granularity:
            self.granularities = _split_list(args.granularity)
        if args.alpha is not None:
            self.coalition_sizes = tuple(args.alpha)
        if args.threshold is not None:
            self.thresholds = tuple(args.threshold)
        if args.abstain_mode is not None:
            if args.abstain_mode not in ABSTAIN_MODES:
                raise ConfigError(f"bad abstain mode {args.abstain_mode!r}")
            self.abstain_mode = args.abstain_mode
        if args.exclude_style_type:
            self.exclude_style_types = _split_list(args.exclude_style_type)
        if args.exclude_contest:
            self.exclude_contests = _split_list(args.exclude_contest)

    def check_input_paths(self) -> dict[str, Path]:
        """Fail fast on missing inputs; returns the paths to checksum."""
        inputs: dict[str, Path] = {}
        candidates: list[tuple[str, Path | None]] = [
            ("cvr", self.cvr),
            ("contests", self.contests),
            ("certified", self.certified),
        ]
        if isinstance(self.descriptor, Path):
            candidates.append(("descriptor", self.descriptor))
        if self.voted_file is not None:
            candidates.append(("voted_file", self.voted_file["path"]))
        for key in ("redaction", "coarsening", "noising"):
            if isinstance(self.policy.get(key), Path):
                candidates.append((f"policy_{key}", self.policy[key]))
        if isinstance(self.geo.get("centroids"), Path):
            candidates.append(("centroids", self.geo["centroids"]))
        for name, p in candidates:
            if p is None:
                continue
            if not p.exists():
                raise ConfigError(f"{name} path does not exist: {p}")
            inputs[name] = p
        return inputs

    def prepare_out_dir(self) -> Path:
        if self.out_dir is None:
            raise ConfigError("no output directory; set out_dir or pass --out")
        out = Path(self.out_dir)
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"cannot create output directory {out}: {exc}")
        if not os.access(out, os.W_OK):
            raise ConfigError(f"output directory not writable: {out}")
        return out


def _split_list(values: Sequence[str]) -> tuple[str, ...]:
    out: list[str] = []
    for v in values:
        out.extend(part for part in v.split(",") if part)
    return tuple(out)


def _json_value(value: Path | dict | list):
    if isinstance(value, (dict, list)):
        return value
    with open(value) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{value} is not valid JSON: {exc}") from exc


def _write_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_reports(reports: Sequence[Report], out: Path) -> dict[str, str]:
    checksums: dict[str, str] = {}
    for report in reports:
        path = report.write(out)
        checksums[report.filename()] = sha256_file(path)
    return checksums


def _write_manifest(
    out: Path,
    command: str,
    cfg: RunConfig | None,
    inputs: dict[str, Path],
    outputs: dict[str, str],
    extra: dict | None = None,
) -> None:
    manifest = {
        "tool": "voterev",
        "version": __version__,
        "command": command,
        "config": cfg.echo if cfg is not None else {},
        "seed": cfg.seed if cfg is not None else None,
        "inputs": {
            name: {"path": str(p), "sha256": sha256_file(p)}
            for name, p in inputs.items()
        },
        "outputs": outputs,
    }
    if extra:
        manifest.update(extra)
    _write_json(out / "manifest.json", manifest)


def _write_error(out: Path | None, exit_code: int, exc: BaseException) -> None:
    if out is None or not out.is_dir():
        return
    _write_json(
        out / "error_report.json",
        {
            "status": "error",
            "exit_code": exit_code,
            "error_type": type(exc).__name__,
            "message": str(exc),
        },
    )


def _load_election(cfg: RunConfig) -> tuple[Election, dict]:
    """Ingest the configured ballot data; returns extra manifest records."""
    if cfg.cvr is None:
        raise ConfigError("config needs a 'cvr' input path")
    if cfg.descriptor is None:
        raise ConfigError("config needs a format 'descriptor'")
    descriptor = FormatDescriptor.from_dict(_json_value(cfg.descriptor))
    contests = None
    if cfg.contests is not None:
        contests = read_contest_specs(cfg.contests)
    election, report = ingest_cvr(cfg.cvr, descriptor, contests)
    if election.n_ballots == 0:
        raise DataError("no usable ballots in the input")
    return election, {"ingest": report.to_dict()}


def _validate_canvass(cfg: RunConfig, election: Election, out: Path) -> dict:
    certified = read_certified_totals(cfg.certified)
    result = validate_against_canvass(election, certified)
    _write_json(out / "validation_report.json", result.to_dict())
    if not result.passed:
        raise DataError(
            "certified totals do not match the ingested ballots; "
            "see validation_report.json"
        )
    return result.to_dict()


# -- subcommands -------------------------------------------------------------


def cmd_analyze(cfg: RunConfig, args: argparse.Namespace) -> int:
    if not cfg.granularities:
        raise ConfigError("analyze needs at least one granularity")
    inputs = cfg.check_input_paths()
    out = cfg.prepare_out_dir()
    opts = AnalyzeOptions(
        granularities=cfg.resolved_granularities(),
        coalition_sizes=cfg.coalition_sizes,
        thresholds=cfg.thresholds,
        count_all_abstain=cfg.count_all_abstain,
        exclude_style_types=cfg.exclude_style_types,
        exclude_contests=cfg.exclude_contests,
        focus_contest=cfg.focus_contest,
        size_cutoffs=cfg.size_cutoffs,
    )
    election, extra = _load_election(cfg)
    _write_json(out / "ingest_report.json", extra["ingest"])
    if cfg.certified is not None:
        _validate_canvass(cfg, election, out)

    if cfg.voted_file is not None:
        voted = read_voted_file(
            cfg.voted_file["path"], cfg.voted_file["columns"],
            cfg.voted_file["delimiter"],
        )
        linkage = {
            g.name: link_voted_file(election, voted, g).to_dict()
            for g in opts.granularities
        }
        _write_json(out / "linkage_report.json", linkage)

    reports = run_analysis(election, opts)
    outputs = _write_reports(reports, out)
    _write_manifest(out, "analyze", cfg, inputs, outputs)
    print(f"analyze: wrote {len(outputs)} reports to {out}")
    return EXIT_OK


def _policy_options(cfg: RunConfig) -> PolicyOptions:
    gran_name = cfg.policy.get("granularity")
    if gran_name is None:
        gran_name = cfg.granularities[0] if cfg.granularities else "ballot_equivalent"
    redaction = coarsening = noising = None
    if "redaction" in cfg.policy:
        redaction = RedactionPolicy.from_dict(_json_value(cfg.policy["redaction"]))
    if "coarsening" in cfg.policy:
        raw = _json_value(cfg.policy["coarsening"])
        if isinstance(raw, dict):
            raw = raw.get("rules", raw)
        coarsening = CoarseningPolicy.from_dict(raw)
    if "noising" in cfg.policy:
        noising = NoisingSpec.from_dict(_json_value(cfg.policy["noising"]))
    return PolicyOptions(
        granularity=granularity_by_name(gran_name),
        redaction=redaction,
        coarsening=coarsening,
        noising=noising,
        k_max=int(cfg.policy.get("k_max", 40)),
        coalition_sizes=cfg.coalition_sizes,
        thresholds=cfg.thresholds,
        count_all_abstain=cfg.count_all_abstain,
        seed=cfg.seed,
    )


def cmd_policy(cfg: RunConfig, args: argparse.Namespace) -> int:
    inputs = cfg.check_input_paths()
    out = cfg.prepare_out_dir()
    opts = _policy_options(cfg)
    election, extra = _load_election(cfg)
    _write_json(out / "ingest_report.json", extra["ingest"])
    reports = run_policy(election, opts)
    outputs = _write_reports(reports, out)
    _write_manifest(out, "policy", cfg, inputs, outputs)
    print(f"policy: wrote {len(outputs)} reports to {out}")
    return EXIT_OK


def cmd_model(cfg: RunConfig, args: argparse.Namespace) -> int:
    out = cfg.prepare_out_dir()
    raw = cfg.model
    scenarios = tuple(
        ModelScenario.from_dict(s) for s in raw.get("scenarios", ())
    )
    kwargs = {}
    if scenarios:
        kwargs["scenarios"] = scenarios
    if "tipping_thresholds" in raw:
        kwargs["tipping_thresholds"] = tuple(raw["tipping_thresholds"])
    opts = ModelOptions(**kwargs)
    reports = run_model(opts)
    outputs = _write_reports(reports, out)
    _write_manifest(out, "model", cfg, {}, outputs)
    print(f"model: wrote {len(outputs)} reports to {out}")
    return EXIT_OK


def cmd_geo(cfg: RunConfig, args: argparse.Namespace) -> int:
    if "centroids" not in cfg.geo:
        raise ConfigError("geo needs a 'centroids' path in the config")
    if "radii" not in cfg.geo:
        raise ConfigError("geo needs a 'radii' list in the config")
    inputs = cfg.check_input_paths()
    out = cfg.prepare_out_dir()
    centroids = read_centroids(
        cfg.geo["centroids"],
        delimiter=cfg.geo.get("delimiter", ","),
        planar=bool(cfg.geo.get("planar", False)),
    )
    gran_name = cfg.geo.get("granularity", PRECINCT.name)
    opts = GeoOptions(
        centroids=centroids,
        radii=tuple(float(r) for r in cfg.geo["radii"]),
        granularity=granularity_by_name(gran_name),
        contest=cfg.geo.get("contest"),
        include_residual=bool(cfg.geo.get("include_residual", False)),
        count_all_abstain=cfg.count_all_abstain,
    )
    election, extra = _load_election(cfg)
    _write_json(out / "ingest_report.json", extra["ingest"])
    reports = run_geo(election, opts)
    outputs = _write_reports(reports, out)
    _write_manifest(out, "geo", cfg, inputs, outputs)
    print(f"geo: wrote {len(outputs)} reports to {out}")
    return EXIT_OK


def cmd_synth(cfg_path: Path | None, args: argparse.Namespace) -> int:
    if cfg_path is None:
        raise ConfigError("synth needs --config pointing at a generator spec")
    if not Path(cfg_path).exists():
        raise ConfigError(f"no such config file: {cfg_path}")
    spec = SynthSpec.from_json_file(cfg_path)
    if args.seed is not None:
        spec = dataclasses.replace(spec, seed=args.seed)
    if args.out is None:
        raise ConfigError("synth needs --out")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = generate(spec)
    paths = emit(result, out, layout=args.layout)
    outputs = {
        Path(p).name: sha256_file(p) for p in sorted(paths.values())
    }
    manifest = {
        "tool": "voterev",
        "version": __version__,
        "command": "synth",
        "config": _json_value(Path(cfg_path)),
        "seed": spec.seed,
        "inputs": {},
        "outputs": outputs,
        "ballots": result.election.n_ballots,
    }
    _write_json(out / "manifest.json", manifest)
    print(f"synth: wrote {result.election.n_ballots} ballots to {out}")
    return EXIT_OK


def cmd_validate(cfg: RunConfig, args: argparse.Namespace) -> int:
    inputs = cfg.check_input_paths()
    out = cfg.prepare_out_dir()
    election, extra = _load_election(cfg)
    _write_json(out / "ingest_report.json", extra["ingest"])
    problems: list[str] = []
    if extra["ingest"]["rows_rejected"]:
        problems.append(f"{extra['ingest']['rows_rejected']} rows rejected")
    if cfg.certified is not None:
        certified = read_certified_totals(cfg.certified)
        result = validate_against_canvass(election, certified)
        _write_json(out / "validation_report.json", result.to_dict())
        if not result.passed:
            problems.append("certified totals do not match")
    _write_manifest(out, "validate", cfg, inputs, {})
    if problems:
        err = DataError("; ".join(problems))
        _write_error(out, EXIT_DATA, err)
        print(f"validate: FAILED ({err})", file=sys.stderr)
        return EXIT_DATA
    print(f"validate: ok ({election.n_ballots} ballots)")
    return EXIT_OK


# -- argument parsing --------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse default exits 2; we reserve
        raise ConfigError(message)  # that for data failures, so raise instead


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, help="run configuration JSON")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument(
        "--granularity", action="append", metavar="NAME",
        help="reporting granularity; repeatable or comma separated",
    )
    common.add_argument(
        "--alpha", action="append", type=int, metavar="A",
        help="coalition size for local revelation; repeatable",
    )
    common.add_argument(
        "--threshold", action="append", type=float, metavar="P",
        help="probabilistic revelation threshold; repeatable",
    )
    common.add_argument("--abstain-mode", choices=ABSTAIN_MODES)
    common.add_argument(
        "--exclude-style-type", action="append", metavar="TYPE",
        help="drop these style types from the per-contest report",
    )
    common.add_argument(
        "--exclude-contest", action="append", metavar="ID",
        help="drop these contests from the per-contest report",
    )

    parser = _Parser(
        prog="voterev",
        description="Quantify vote-choice revelation in election reporting.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.add_parser(
        "analyze", parents=[common],
        help="revelation tables for one election",
    ).set_defaults(func=cmd_analyze)
    sub.add_parser(
        "policy", parents=[common],
        help="redaction, coarsening, and noising tradeoffs",
    ).set_defaults(func=cmd_policy)
    sub.add_parser(
        "model", parents=[common],
        help="expected-revelation sweeps and tipping points",
    ).set_defaults(func=cmd_model)
    sub.add_parser(
        "geo", parents=[common],
        help="neighborhood agreement around revealed choices",
    ).set_defaults(func=cmd_geo)
    synth = sub.add_parser(
        "synth", parents=[common], help="generate a synthetic election",
    )
    synth.add_argument(
        "--layout", choices=("wide", "long", "jsonl"), default="wide",
    )
    synth.set_defaults(func=cmd_synth)
    sub.add_parser(
        "validate", parents=[common],
        help="ingest checks plus certified-total comparison",
    ).set_defaults(func=cmd_validate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    out_dir: Path | None = None
    try:
        args = parser.parse_args(argv)
        if getattr(args, "command", None) is None:
            parser.print_usage(sys.stderr)
            return EXIT_CONFIG
        if args.func is cmd_synth:
            return cmd_synth(args.config, args)
        if args.config is not None:
            cfg = RunConfig.from_file(args.config)
        else:
            cfg = RunConfig()
        cfg.apply_overrides(args)
        if cfg.out_dir is not None:
            try:
                out_dir = cfg.prepare_out_dir()
            except ConfigError:
                out_dir = None  # re-raised inside the command with context
        return args.func(cfg, args)
    except (ConfigError, ModelDomainError) as exc:
        _write_error(out_dir, EXIT_CONFIG, exc)
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IngestError, DataError) as exc:
        _write_error(out_dir, EXIT_DATA, exc)
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
