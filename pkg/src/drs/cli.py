"""Command-line interface: ``drs validate``, ``drs extract``, ``drs report``.

Exit codes are stable: 0 success, 1 validation errors, 2 extraction
failures, 3 LLM/backend failures, 4 usage errors. Diagnostics go to stderr.
Settings resolve in the order flags > environment variables
(``DRS_EXTRACTOR_URL``, ``DRS_LLM_BASE_URL``) > an optional ``drs.toml``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .extract import ExtractionError, ExtractorBackendConfig, ExtractorKind, extract_all
from .geo import EmptyRegionError
from .ingest import (
    DatasetError,
    DmsError,
    load_dataset,
    observation_to_record,
    parse_dms,
    scan_dataset,
    validate,
)
from .llm import LlmBackendConfig, LlmError, LlmKind, MissingApiKeyError
from .model import GeoPoint, ValidationError
from .prompt import PromptBudgetError
from .report import InputPaths, RegionSpec, run_pipeline

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_EXTRACTION = 2
EXIT_LLM = 3
EXIT_USAGE = 4


class UsageError(Exception):
    pass


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drs",
        description="Generate structure and regional reconnaissance summary reports.",
    )
    parser.add_argument("--config", type=Path, default=None,
                        help="TOML config file (default: ./drs.toml when present)")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-q", "--quiet", action="store_true", help="warnings only")
    verbosity.add_argument("-v", "--verbose", action="store_true", help="debug output")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_inputs(p):
        p.add_argument("--event", type=Path, required=True, help="event.json")
        p.add_argument("--structures", type=Path, required=True, help="structures.jsonl")
        p.add_argument("--observations", type=Path, required=True,
                       help="observations.jsonl")

    def add_extractor(p):
        p.add_argument("--extractor", choices=["manifest", "remote"], default="manifest")
        p.add_argument("--manifest", type=Path, default=None,
                       help="attributes manifest (manifest extractor)")
        p.add_argument("--extractor-url", default=None,
                       help="extraction service URL (remote extractor)")
        p.add_argument("--extractor-timeout-ms", type=int, default=10000)
        p.add_argument("--extractor-retries", type=int, default=2)

    p_validate = sub.add_parser("validate", help="check the input files and report issues")
    add_inputs(p_validate)

    p_extract = sub.add_parser("extract", help="fill observation attributes and write JSONL")
    add_inputs(p_extract)
    add_extractor(p_extract)
    p_extract.add_argument("--out", type=Path, required=True,
                           help="output observations file")

    p_report = sub.add_parser("report", help="run the full report pipeline")
    add_inputs(p_report)
    add_extractor(p_report)
    p_report.add_argument("--llm", choices=["offline", "remote"], default="offline")
    p_report.add_argument("--llm-base-url", default=None)
    p_report.add_argument("--llm-model", default=None)
    p_report.add_argument("--api-key-env", default="DRS_LLM_API_KEY",
                          help="environment variable holding the API key")
    p_report.add_argument("--llm-timeout-ms", type=int, default=60000)
    p_report.add_argument("--llm-retries", type=int, default=3)
    p_report.add_argument("--budget-tokens", type=int, default=8000)
    p_report.add_argument("--out", type=Path, required=True, help="output directory")
    p_report.add_argument("--region", default=None, help="regional report name")
    p_report.add_argument("--center", default=None,
                          help="region center: 'lat,lon' or a DMS pair")
    p_report.add_argument("--radius-km", type=float, default=None)
    return parser


def _configure_logging(args) -> None:
    if args.quiet:
        level = logging.WARNING
    elif args.verbose:
        level = logging.DEBUG
    else:
        level = logging.INFO
    logging.basicConfig(
        level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s"
    )


def _load_config_file(args) -> dict:
    path = args.config if args.config is not None else Path("drs.toml")
    if args.config is not None and not path.exists():
        raise UsageError(f"config file not found: {path}")
    if path.exists():
        try:
            return tomllib.loads(path.read_text(encoding="utf-8"))
        except tomllib.TOMLDecodeError as exc:
            raise UsageError(f"invalid config file {path}: {exc}") from exc
    return {}


def resolve_setting(flag_value, env_name: Optional[str], toml_value):
    """Apply the flags > environment > config-file precedence for one setting."""
    if flag_value is not None:
        return flag_value
    if env_name:
        env_value = os.environ.get(env_name)
        if env_value:
            return env_value
    return toml_value


def parse_center(text: str) -> GeoPoint:
    """Parse a region center given as '17.9998,-66.6204' or as a DMS pair."""
    parts = [p.strip() for p in text.split(",")]
    if "°" in text:
        if len(parts) != 2:
            raise UsageError(f"expected 'LAT_DMS, LON_DMS', got {text!r}")
        try:
            return GeoPoint(parse_dms(parts[0], axis="lat"), parse_dms(parts[1], axis="lon"))
        except (DmsError, ValidationError) as exc:
            raise UsageError(f"invalid DMS center {text!r}: {exc}") from exc
    if len(parts) != 2:
        raise UsageError(f"expected 'lat,lon', got {text!r}")
    try:
        return GeoPoint(float(parts[0]), float(parts[1]))
    except (ValueError, ValidationError) as exc:
        raise UsageError(f"invalid center {text!r}: {exc}") from exc


def _extractor_config(args, config_file: dict) -> ExtractorBackendConfig:
    section = config_file.get("extractor", {})
    manifest = resolve_setting(args.manifest, None, section.get("manifest"))
    url = resolve_setting(args.extractor_url, "DRS_EXTRACTOR_URL", section.get("url"))
    try:
        return ExtractorBackendConfig(
            kind=ExtractorKind(args.extractor),
            manifest_path=Path(manifest) if manifest else None,
            endpoint_url=url,
            timeout_ms=args.extractor_timeout_ms,
            max_retries=args.extractor_retries,
        )
    except ValidationError as exc:
        raise UsageError(f"extractor configuration: {exc}") from exc


def _llm_config(args, config_file: dict) -> LlmBackendConfig:
    section = config_file.get("llm", {})
    base_url = resolve_setting(args.llm_base_url, "DRS_LLM_BASE_URL", section.get("base_url"))
    model = resolve_setting(args.llm_model, None, section.get("model"))
    try:
        config = LlmBackendConfig(
            kind=LlmKind(args.llm),
            base_url=base_url,
            model_name=model,
            api_key_env_var=args.api_key_env,
            timeout_ms=args.llm_timeout_ms,
            max_retries=args.llm_retries,
        )
    except ValidationError as exc:
        raise UsageError(f"llm configuration: {exc}") from exc
    # A remote backend without its key should fail at startup, not per structure.
    if config.kind is LlmKind.REMOTE and not os.environ.get(config.api_key_env_var):
        raise MissingApiKeyError(
            f"environment variable {config.api_key_env_var} is not set"
        )
    return config


def _region_spec(args) -> Optional[RegionSpec]:
    if args.region is None:
        if args.center is not None or args.radius_km is not None:
            raise UsageError("--center/--radius-km require --region")
        return None
    if args.center is None or args.radius_km is None:
        raise UsageError("--region requires --center and --radius-km")
    if args.radius_km <= 0:
        raise UsageError(f"--radius-km must be positive, got {args.radius_km}")
    return RegionSpec(name=args.region, center=parse_center(args.center),
                      radius_km=args.radius_km)


def _print_issues(issues) -> None:
    for issue in issues:
        print(str(issue), file=sys.stderr)


def _cmd_validate(args) -> int:
    dataset, report = scan_dataset(args.event, args.structures, args.observations)
    issues = list(report.issues)
    if dataset is not None:
        issues.extend(validate(dataset).issues)
    _print_issues(issues)
    errors = [i for i in issues if i.severity.value == "error"]
    if errors:
        print(f"{len(errors)} error(s) found", file=sys.stderr)
        return EXIT_VALIDATION
    print("dataset OK" + (f" ({len(issues)} warning(s))" if issues else ""))
    return EXIT_OK


def _cmd_extract(args, config_file: dict) -> int:
    config = _extractor_config(args, config_file)
    dataset = load_dataset(args.event, args.structures, args.observations)
    result = extract_all(config, dataset)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", encoding="utf-8") as handle:
        for obs in result.dataset.observations:
            handle.write(json.dumps(observation_to_record(obs)) + "\n")
    print(f"wrote {args.out} ({len(result.dataset.observations)} observations)")
    if result.failures:
        for failure in result.failures:
            print(f"EXTRACT FAILED {failure.image_id}: {failure.message}", file=sys.stderr)
        return EXIT_EXTRACTION
    return EXIT_OK


def _cmd_report(args, config_file: dict) -> int:
    extractor_config = _extractor_config(args, config_file)
    llm_config = _llm_config(args, config_file)
    region_spec = _region_spec(args)
    manifest = run_pipeline(
        InputPaths(args.event, args.structures, args.observations),
        extractor_config,
        llm_config,
        out_dir=args.out,
        region_spec=region_spec,
        budget_tokens=args.budget_tokens,
    )
    for output in manifest.outputs:
        print(str(args.out / output))
    for failure in manifest.failures:
        print(f"{failure.stage.upper()} FAILED {failure.ref}: {failure.message}",
              file=sys.stderr)
    stages = {f.stage for f in manifest.failures}
    if "extract" in stages:
        return EXIT_EXTRACTION
    if "llm" in stages:
        return EXIT_LLM
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    _configure_logging(args)
    try:
        config_file = _load_config_file(args)
        if args.command == "validate":
            return _cmd_validate(args)
        if args.command == "extract":
            return _cmd_extract(args, config_file)
        return _cmd_report(args, config_file)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PromptBudgetError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DatasetError as exc:
        _print_issues(exc.report.issues)
        return EXIT_VALIDATION
    except EmptyRegionError as exc:
        print(f"region error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ExtractionError as exc:
        print(f"extraction error: {exc}", file=sys.stderr)
        return EXIT_EXTRACTION
    except LlmError as exc:
        print(f"llm error: {exc}", file=sys.stderr)
        return EXIT_LLM


if __name__ == "__main__":
    sys.exit(main())
