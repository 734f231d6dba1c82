"""
Command-line interface for qsc-analysis.

Builds constellations, assembles analytic security reports, runs the Monte
Carlo pipeline and the known-plaintext key search, and writes machine-readable
JSON reports and plot-ready CSV.

Exit codes: 0 success, 1 document failed schema validation, 2 parameter error,
3 numerical or runtime error.
"""

import inspect
import io
import json
import os
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Iterator, Optional

import click
import numpy as np
import yaml
from dotenv import load_dotenv

from . import __version__
from .constellation import DEFAULT_LAMBDA, build_constellation, masking_metrics
from .errors import InvalidParameterError, QscError
from .keystream import GENERATOR_KINDS
from .kpa import DEFAULT_RADIUS, KPA_MODES, kpa_search, run_kpa_experiment
from .receivers import HETERODYNE
from .result_manifest import write_manifest
from .security_metrics import DEFAULT_COLLAPSE_THRESHOLD, analyze_scenario, locking_report
from .simulator import TrialConfig, parse_scheme, run_trial

TOOL = "qsc"

# document "schema" tag -> bundled JSON Schema file
SCHEMA_FILES = {
    "qsc-constellation/1": "constellation_v1.json",
    "qsc-security-report/1": "security_report_v1.json",
    "qsc-simulation-report/1": "simulation_report_v1.json",
    "qsc-kpa-curve/1": "kpa_curve_v1.json",
    "qsc-run-result/1": "run_result_v1.json",
}

# --plaintext choice -> (TrialConfig.plaintext_source, fixed_bit)
_PLAINTEXT_CHOICES = {"random": ("random", 0), "zeros": ("fixed", 0), "ones": ("fixed", 1)}

# config-file spellings that differ from the click parameter names
_CONFIG_ALIASES = {"m": "M", "lambda": "lam", "amplitude": "alpha", "n_slots": "slots", "rp": "r_p"}


class _FullHelpCommand(click.Command):
    """A command that keeps its full one-line summary in the group listing."""

    def get_short_help_str(self, limit: int = 45) -> str:
        if self.short_help:
            return inspect.cleandoc(self.short_help).strip()
        if self.help:
            first_paragraph = inspect.cleandoc(self.help).split("\n\n", 1)[0]
            return " ".join(first_paragraph.split())
        return ""


class _FullHelpGroup(click.Group):
    """A group whose subcommands keep their full short help (no ellipsis)."""

    command_class = _FullHelpCommand


_CONTEXT_SETTINGS = {"max_content_width": 120}


class _CountType(click.ParamType):
    """Non-negative integer that also accepts scientific notation (``1e6``)."""

    name = "count"

    def convert(self, value: Any, param: Optional[click.Parameter], ctx: Optional[click.Context]) -> int:
        if isinstance(value, int) and not isinstance(value, bool):
            number = value
        else:
            text = str(value).strip()
            try:
                number = int(text)
            except ValueError:
                try:
                    as_float = float(text)
                except ValueError:
                    self.fail(f"{value!r} is not a count", param, ctx)
                if not as_float.is_integer():
                    self.fail(f"{value!r} is not a whole number", param, ctx)
                number = int(as_float)
        if number < 0:
            self.fail(f"{value!r} must not be negative", param, ctx)
        return number


COUNT = _CountType()


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _fail(message: str, code: int) -> None:
    click.echo(click.style(f"Error: {message}", fg="red"), err=True)
    sys.exit(code)


@contextmanager
def _reporting_errors() -> Iterator[None]:
    try:
        yield
    except InvalidParameterError as e:
        _fail(str(e), 2)
    except QscError as e:
        _fail(str(e), 3)
    except FloatingPointError as e:
        _fail(f"numerical error: {e}", 3)
    except OSError as e:
        _fail(str(e), 3)


def _json_default(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def _dumps(document: dict, compact: bool = False) -> str:
    return json.dumps(document, indent=None if compact else 2, default=_json_default)


def _check_output(path: Optional[Path], option: str) -> None:
    if path is None:
        return
    parent = path.resolve().parent
    if not parent.is_dir():
        raise InvalidParameterError(option, str(path), f"directory {parent} does not exist")


def _emit(document: dict, out: Optional[Path], compact: bool = False) -> None:
    text = _dumps(document, compact)
    if out is None:
        click.echo(text)
        return
    out.write_text(text + "\n")
    click.echo(click.style(f"Wrote: {out}", fg="green"), err=True)


def _resolve_seed(seed: Optional[int]) -> int:
    if seed is not None:
        return seed
    drawn = int(np.random.SeedSequence().entropy)
    click.echo(click.style(f"Seed: {drawn} (pass --seed {drawn} to repeat this run)", fg="yellow"), err=True)
    return drawn


def _resolve_threads(threads: Optional[int]) -> Optional[int]:
    """``--threads`` or ``QSC_THREADS`` (``.env`` honoured); ``None`` lets the pool decide."""
    if threads is not None:
        return threads
    load_dotenv()  # loads .env from cwd (or parents) if present
    raw = os.environ.get("QSC_THREADS")
    if not raw:
        return None
    try:
        value = int(raw)
    except ValueError:
        raise click.BadParameter(f"QSC_THREADS={raw!r} is not an integer", param_hint="--threads")
    if value < 1:
        raise click.BadParameter(f"QSC_THREADS={raw!r} must be >= 1", param_hint="--threads")
    return value


def _normalise_config(mapping: dict) -> dict:
    normalised = {}
    for key, value in mapping.items():
        name = str(key).replace("-", "_")
        normalised[_CONFIG_ALIASES.get(name, name)] = value
    return normalised


def _load_config(path: Path, command: Optional[str]) -> dict:
    """Turn a YAML/JSON config file into a click ``default_map``.

    The file holds either one flat mapping for the invoked command, or one
    mapping per command name.
    """
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as e:
        raise click.BadParameter(f"cannot parse {path}: {e}", param_hint="--config")
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise click.BadParameter(f"{path} must contain a mapping", param_hint="--config")
    if raw and all(key in main.commands for key in raw):
        return {
            name: _normalise_config(section or {})
            for name, section in raw.items()
            if isinstance(section, dict) or section is None
        }
    return {command: _normalise_config(raw)} if command else {}


def _trial_config(
    scheme: str,
    M: int,
    alpha: float,
    slots: int,
    seed: int,
    plaintext: str,
    key_bits: int,
    generator: str,
    key: Optional[int],
    dsr_strength: float,
    osk_shared_seed: bool,
    noiseless: bool,
    shard_size: int,
) -> TrialConfig:
    source, fixed_bit = _PLAINTEXT_CHOICES[plaintext]
    return TrialConfig(
        scheme=scheme,
        M=M,
        amplitude=alpha,
        n_slots=slots,
        master_seed=seed,
        plaintext_source=source,
        fixed_bit=fixed_bit,
        key_bits=key_bits,
        generator=generator,
        key=key,
        osk_shared_seed=osk_shared_seed,
        dsr_strength=dsr_strength,
        noiseless=noiseless,
        shard_size=shard_size,
    )


# ---------------------------------------------------------------------------
# Group
# ---------------------------------------------------------------------------


@click.group(cls=_FullHelpGroup, context_settings=_CONTEXT_SETTINGS)
@click.version_option(version=__version__)
@click.option(
    "--config",
    "config_file",
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    default=None,
    help="YAML/JSON file of option defaults (flat, or keyed by command). Flags win.",
)
@click.option(
    "--threads",
    type=click.IntRange(min=1),
    default=None,
    help="Cap on Monte Carlo worker threads. Falls back to QSC_THREADS.",
)
@click.pass_context
def main(ctx: click.Context, config_file: Optional[Path], threads: Optional[int]) -> None:
    """
    QSC Analysis.

    Simulate and analyse quantum-noise stream ciphers (Y-00, OSK, QNDM, DSR):
    constellations, quantum-detection security metrics, Monte Carlo
    Alice/Bob/Eve runs and known-plaintext key searches.
    """
    ctx.ensure_object(dict)
    ctx.obj["threads"] = _resolve_threads(threads)
    if config_file is not None:
        ctx.default_map = _load_config(config_file, ctx.invoked_subcommand)


# ---------------------------------------------------------------------------
# constellation
# ---------------------------------------------------------------------------


@main.command()
@click.option("--scheme", type=click.Choice(["y00", "qndm"]), default="y00", show_default=True)
@click.option("--M", "M", type=int, required=True, help="Number of bases (keyed running-key values).")
@click.option("--alpha", type=float, required=True, help="Coherent amplitude |alpha|.")
@click.option("-o", "--out", type=click.Path(dir_okay=False, path_type=Path), default=None,
              help="Output JSON file (default: stdout).")
@click.option("--compact", is_flag=True, help="Output compact JSON (no indentation)")
def constellation(scheme: str, M: int, alpha: float, out: Optional[Path], compact: bool) -> None:
    """Write a Y-00 (2M points) or QNDM (2M^2 points) constellation as JSON.

    \b
    Examples:
        qsc constellation --scheme y00 --M 2 --alpha 1
        qsc constellation --scheme qndm --M 4 --alpha 4 -o qndm4.json
    """
    with _reporting_errors():
        _check_output(out, "out")
        built = build_constellation(scheme, M, alpha)
        _emit(built.to_dict(), out, compact)


# ---------------------------------------------------------------------------
# analyze / locking
# ---------------------------------------------------------------------------


@main.command()
@click.option("--scheme", type=click.Choice(["y00", "qndm", "dsr"]), default="y00", show_default=True)
@click.option("--M", "M", type=int, required=True, help="Number of bases.")
@click.option("--alpha", type=float, required=True, help="Coherent amplitude |alpha|.")
@click.option("--key-bits", type=int, default=256, show_default=True, help="Secret key length |K|.")
@click.option("--key-bits-2", type=int, default=None, help="QNDM second key length (default: --key-bits).")
@click.option("--rp", "r_p", type=float, default=None, help="DSR strength |R_p| (dsr only).")
@click.option("--lambda", "lam", type=float, default=DEFAULT_LAMBDA, show_default=True,
              help="Masking threshold Lambda.")
@click.option("--osk", is_flag=True, help="Analyse Eve's binary error with OSK enabled.")
@click.option("--collapse-threshold", type=float, default=DEFAULT_COLLAPSE_THRESHOLD, show_default=True,
              help="C1 (bits/slot) below which unicity is reported as capped.")
@click.option("-o", "--out", type=click.Path(dir_okay=False, path_type=Path), default=None,
              help="Output JSON file (default: stdout).")
@click.option("--compact", is_flag=True, help="Output compact JSON (no indentation)")
def analyze(
    scheme: str,
    M: int,
    alpha: float,
    key_bits: int,
    key_bits_2: Optional[int],
    r_p: Optional[float],
    lam: float,
    osk: bool,
    collapse_threshold: float,
    out: Optional[Path],
    compact: bool,
) -> None:
    """Analytic security report: error probabilities, Holevo, C1, unicity, masking.

    \b
    Examples:
        qsc analyze --scheme y00 --M 16 --alpha 4
        qsc analyze --scheme dsr --M 16 --alpha 4 --rp 6.2832
    """
    with _reporting_errors():
        _check_output(out, "out")
        report = analyze_scenario(
            scheme,
            M,
            alpha,
            key_bits,
            key_bits_2=key_bits_2,
            r_p=r_p,
            lam=lam,
            osk=osk,
            collapse_threshold=collapse_threshold,
        )
    click.echo(click.style(f"{scheme} M={M} |alpha|={alpha}: unicity {report.unicity_lower}", fg="cyan"), err=True)
    for note in report.notes:
        click.echo(click.style(f"Warning: {note}", fg="yellow"), err=True)
    with _reporting_errors():
        _emit(report.to_dict(), out, compact)


@main.command()
@click.option("--n", "n", type=int, required=True, help="Number of locked bits n.")
@click.option("--key-bits", type=int, default=1, show_default=True, help="Locking key entropy H(K).")
@click.option("--epsilon", type=float, default=None, help="Target leakage epsilon for the key requirement.")
@click.option("-o", "--out", type=click.Path(dir_okay=False, path_type=Path), default=None,
              help="Output JSON file (default: stdout).")
@click.option("--compact", is_flag=True, help="Output compact JSON (no indentation)")
def locking(n: int, key_bits: int, epsilon: Optional[float], out: Optional[Path], compact: bool) -> None:
    """Data-locking report for n bits encoded in a key-selected BB84 basis.

    \b
    Example:
        qsc locking --n 1024
    """
    with _reporting_errors():
        _check_output(out, "out")
        report = locking_report(n, key_bits, epsilon)
    click.echo(click.style(f"locking n={n}: eta = {report.eta:.6g}", fg="cyan"), err=True)
    with _reporting_errors():
        _emit(report.to_dict(), out, compact)


# ---------------------------------------------------------------------------
# simulate / kpa
# ---------------------------------------------------------------------------


def _run_options(default_slots: int, default_scheme: str):
    """Options shared by the Monte Carlo commands."""

    def decorate(f):
        options = [
            click.option("--scheme", default=default_scheme, show_default=True,
                         help="y00 or qndm, optionally +osk and/or +dsr (e.g. y00+osk+dsr)."),
            click.option("--M", "M", type=int, required=True, help="Number of bases."),
            click.option("--alpha", type=float, required=True, help="Coherent amplitude |alpha|."),
            click.option("--slots", type=COUNT, default=default_slots, show_default=True,
                         help="Number of slots (scientific notation accepted, e.g. 1e6)."),
            click.option("--seed", type=click.IntRange(min=0), default=None,
                         help="Master seed. Drawn and printed when omitted."),
            click.option("--plaintext", type=click.Choice(sorted(_PLAINTEXT_CHOICES)), default="random",
                         show_default=True),
            click.option("--key-bits", type=int, default=16, show_default=True, help="Running-key PRNG key length."),
            click.option("--key", type=click.IntRange(min=0), default=None,
                         help="Basis key (default: derived from the seed)."),
            click.option("--dsr-strength", type=float, default=0.0, show_default=True,
                         help="DSR strength |R_p| (requires +dsr)."),
            click.option("--osk-shared-seed", is_flag=True, help="Take OSK bits from the basis PRNG stream."),
            click.option("--noiseless", is_flag=True, help="Disable receiver noise (debug/oracle runs)."),
            click.option("--shard-size", type=click.IntRange(min=1), default=65536, show_default=True,
                         help="Slots per deterministic work shard."),
            click.option("--result-out", type=click.Path(dir_okay=False, path_type=Path), default=None,
                         help="Write a qsc-run-result/1 manifest to this path."),
        ]
        for option in reversed(options):
            f = option(f)
        return f

    return decorate


@main.command()
@_run_options(default_slots=100_000, default_scheme="y00")
@click.option("--generator", type=click.Choice(GENERATOR_KINDS), default="lfsr", show_default=True)
@click.option("--lambda", "lam", type=float, default=DEFAULT_LAMBDA, show_default=True,
              help="Masking threshold Lambda.")
@click.option("--masking-check", is_flag=True, help="Refuse to run unless the masking condition holds.")
@click.option("--trace", type=click.Path(dir_okay=False, path_type=Path), default=None,
              help="Write the per-slot trace (.csv or .npz).")
@click.option("-o", "--out", type=click.Path(dir_okay=False, path_type=Path), default=None,
              help="Output JSON report (default: stdout).")
@click.option("--compact", is_flag=True, help="Output compact JSON (no indentation)")
@click.pass_obj
def simulate(
    obj: dict,
    scheme: str,
    M: int,
    alpha: float,
    slots: int,
    seed: Optional[int],
    plaintext: str,
    key_bits: int,
    key: Optional[int],
    dsr_strength: float,
    osk_shared_seed: bool,
    noiseless: bool,
    shard_size: int,
    result_out: Optional[Path],
    generator: str,
    lam: float,
    masking_check: bool,
    trace: Optional[Path],
    out: Optional[Path],
    compact: bool,
) -> None:
    """Monte Carlo run: Alice encodes, Bob decodes with the key, Eve heterodynes without it.

    \b
    Examples:
        qsc simulate --M 1 --alpha 1.5 --slots 1e6 --seed 7
        qsc simulate --scheme qndm --M 16 --alpha 4 --masking-check
        qsc simulate --scheme y00+osk --M 64 --alpha 3 --trace run.csv -o run.json
    """
    with _reporting_errors():
        for path, option in ((out, "out"), (trace, "trace"), (result_out, "result_out")):
            _check_output(path, option)
        if trace is not None and trace.suffix not in (".csv", ".npz"):
            raise InvalidParameterError("trace", str(trace), "suffix must be .csv or .npz")
        base, _, _ = parse_scheme(scheme)
        if masking_check:
            report = masking_metrics(build_constellation(base, M, alpha), HETERODYNE.sigma, lam)
            if not report.condition_met:
                raise InvalidParameterError(
                    "masking",
                    report.masked_points,
                    f"noise masks {report.masked_points} fine phases, below Lambda={lam:g} per block",
                )
        seed = _resolve_seed(seed)
        config = _trial_config(
            scheme, M, alpha, slots, seed, plaintext, key_bits, generator, key,
            dsr_strength, osk_shared_seed, noiseless, shard_size,
        )
        click.echo(
            click.style(
                f"Simulating {scheme} M={M} |alpha|={alpha}: {slots} slots in {config.n_shards} shard(s)",
                fg="cyan",
            ),
            err=True,
        )
        result = run_trial(config, workers=obj.get("threads"), keep_trace=trace is not None, lam=lam)

    document = result.report.to_dict()
    bob = document["bob"]
    eve = document["eve_symbol"]
    click.echo(
        f"  Bob BER {bob['rate']:.4g} [{bob['ci_low']:.4g}, {bob['ci_high']:.4g}]; "
        f"Eve symbol error {eve['rate']:.4g}",
        err=True,
    )
    for note in result.report.notes:
        click.echo(click.style(f"Warning: {note}", fg="yellow"), err=True)

    with _reporting_errors():
        _emit(document, out, compact)
        if trace is not None:
            result.table.write(trace)
            click.echo(click.style(f"Wrote: {trace}", fg="green"), err=True)
        if result_out is not None:
            write_manifest(
                result_out,
                TOOL,
                "ok",
                params={"command": "simulate", **config.to_dict()},
                artifacts={
                    "report": str(out.resolve()) if out else None,
                    "trace": str(trace.resolve()) if trace else None,
                },
                info={
                    "bob_error_rate": bob["rate"],
                    "eve_symbol_error_rate": eve["rate"],
                    "eve_binary_error_rate": document["eve_binary"]["rate"],
                    "mi_plugin_bits": document["mutual_information"]["plugin_bits"],
                },
            )
            click.echo(click.style(f"Result manifest written: {result_out.resolve()}", fg="green"), err=True)


@main.command()
@_run_options(default_slots=160, default_scheme="qndm")
@click.option("--mode", type=click.Choice(KPA_MODES), default="hard", show_default=True,
              help="hard: arc-length acceptance; soft: log-likelihood margin.")
@click.option("--radius", type=float, default=DEFAULT_RADIUS, show_default=True,
              help="Acceptance radius in heterodyne standard deviations (hard mode).")
@click.option("--permute-plaintext", is_flag=True,
              help="Attack with a permutation of the true plaintext (control run).")
@click.option("--ciphertext-only", is_flag=True,
              help="Search without the plaintext (Eve's samples only).")
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv", show_default=True)
@click.option("-o", "--out", type=click.Path(dir_okay=False, path_type=Path), default=None,
              help="Output file (default: stdout).")
@click.pass_obj
def kpa(
    obj: dict,
    scheme: str,
    M: int,
    alpha: float,
    slots: int,
    seed: Optional[int],
    plaintext: str,
    key_bits: int,
    key: Optional[int],
    dsr_strength: float,
    osk_shared_seed: bool,
    noiseless: bool,
    shard_size: int,
    result_out: Optional[Path],
    mode: str,
    radius: float,
    permute_plaintext: bool,
    ciphertext_only: bool,
    fmt: str,
    out: Optional[Path],
) -> None:
    """Exhaustive key search; writes the survivor curve (n, survivors, equivocation_bits).

    The search is known-plaintext unless --ciphertext-only is given. With
    --slots 0 nothing is simulated and the curve is the full keyspace.

    \b
    Examples:
        qsc kpa --scheme qndm --M 16 --alpha 0.9 --slots 160 --seed 1
        qsc kpa --scheme y00 --M 16 --alpha 4 --noiseless --slots 12 -o curve.csv
        qsc kpa --scheme y00 --M 16 --alpha 4 --ciphertext-only --slots 64
    """
    if ciphertext_only and permute_plaintext:
        raise click.UsageError("--ciphertext-only and --permute-plaintext are mutually exclusive")
    with _reporting_errors():
        for path, option in ((out, "out"), (result_out, "result_out")):
            _check_output(path, option)
        seed = _resolve_seed(seed)
        # a zero-slot run has nothing to simulate; one slot still validates the options
        config = _trial_config(
            scheme, M, alpha, max(slots, 1), seed, plaintext, key_bits, "lfsr", key,
            dsr_strength, osk_shared_seed, noiseless, shard_size,
        )
        attack = "ciphertext-only" if ciphertext_only else "known-plaintext"
        click.echo(
            click.style(
                f"Searching 2^{key_bits}-1 keys over {slots} slots ({scheme}, M={M}, {attack})", fg="cyan"
            ),
            err=True,
        )
        if slots == 0:
            curve = kpa_search(
                np.zeros(0, dtype=complex),
                None if ciphertext_only else np.zeros(0, dtype=np.int64),
                M=M,
                amplitude=alpha,
                scheme=scheme,
                key_bits=key_bits,
                mode=mode,
                radius=radius,
                noiseless=noiseless,
            )
        else:
            curve = run_kpa_experiment(
                config,
                mode=mode,
                radius=radius,
                permute_plaintext=permute_plaintext,
                ciphertext_only=ciphertext_only,
                workers=obj.get("threads"),
            )

    click.echo(
        f"  {curve.final_survivors} survivor(s), {curve.equivocation_bits[-1]:.4f} bits of equivocation",
        err=True,
    )
    if curve.true_key_survived is False:
        click.echo(click.style("Warning: the true key was eliminated", fg="yellow"), err=True)

    with _reporting_errors():
        if fmt == "json":
            _emit(curve.to_dict(), out)
        elif out is None:
            buffer = io.StringIO()
            curve.dump_csv(buffer)
            click.echo(buffer.getvalue(), nl=False)
        else:
            curve.write_csv(out)
            click.echo(click.style(f"Wrote: {out}", fg="green"), err=True)

        if result_out is not None:
            write_manifest(
                result_out,
                TOOL,
                "ok",
                params={
                    "command": "kpa",
                    **config.to_dict(),
                    "n_slots": slots,
                    "mode": mode,
                    "radius": radius,
                    "permute_plaintext": permute_plaintext,
                    "ciphertext_only": ciphertext_only,
                },
                artifacts={"curve": str(out.resolve()) if out else None},
                info=curve.summary(),
            )
            click.echo(click.style(f"Result manifest written: {result_out.resolve()}", fg="green"), err=True)


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------


@main.command()
@click.argument("file", type=click.Path(exists=True, dir_okay=False, path_type=Path))
def validate(file: Path) -> None:
    """Validate a JSON document written by qsc against its bundled schema."""
    import jsonschema

    try:
        document = json.loads(file.read_text())
    except json.JSONDecodeError as e:
        _fail(f"{file} is not JSON: {e}", 2)

    tag = document.get("schema") if isinstance(document, dict) else None
    if tag not in SCHEMA_FILES:
        _fail(f"{file}: unknown document schema {tag!r}", 2)

    schema_path = Path(__file__).parent / "schema" / SCHEMA_FILES[tag]
    schema = json.loads(schema_path.read_text())
    try:
        jsonschema.validate(document, schema)
        click.echo(f"✓ Valid {tag}: {file}")
    except jsonschema.ValidationError as e:
        location = "/".join(str(p) for p in e.absolute_path) or "<root>"
        click.echo(click.style(f"✗ Validation failed at {location}: {e.message}", fg="red"), err=True)
        sys.exit(1)


if __name__ == "__main__":
    main()
