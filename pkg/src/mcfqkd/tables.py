"""CSV formats: Raman spectrum ingestion and results tables."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .fiber import RamanSpectrum

SPECTRUM_HEADER = ("wavelength_nm", "density_dbm_per_nm")
SPECTRUM_METADATA = ("launch_dbm", "length_km", "direction")
NUMBER_FORMAT = ".12g"


class SpectrumError(ValueError):
    exit_code = 4


class SpectrumFormatError(SpectrumError):
    """Malformed line or header."""

    exit_code = 2


class MissingMetadataError(SpectrumFormatError):
    pass


class NonMonotoneSpectrumError(SpectrumError):
    pass


class TooFewSamplesError(SpectrumError):
    pass


def builtin_spectrum_path() -> Path:
    return Path(str(resources.files("mcfqkd") / "data" / "default_intracore_spectrum.csv"))


def parse_spectrum_csv(text: str, source: str = "<spectrum>") -> RamanSpectrum:
    meta: dict[str, str] = {}
    rows: list[tuple[float, float]] = []
    header_seen = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                key, _, value = body.partition("=")
                meta[key.strip()] = value.strip()
            continue
        cells = [c.strip() for c in line.split(",")]
        if not header_seen:
            if tuple(cells) != SPECTRUM_HEADER:
                raise SpectrumFormatError(f"{source}:{lineno}: expected header {','.join(SPECTRUM_HEADER)}")
            header_seen = True
            continue
        if len(cells) != 2:
            raise SpectrumFormatError(f"{source}:{lineno}: expected 2 columns, got {len(cells)}")
        try:
            rows.append((float(cells[0]), float(cells[1])))
        except ValueError:
            raise SpectrumFormatError(f"{source}:{lineno}: non-numeric value") from None

    if not header_seen:
        raise SpectrumFormatError(f"{source}: missing header row")
    missing = [k for k in SPECTRUM_METADATA if k not in meta]
    if missing:
        raise MissingMetadataError(f"{source}: missing metadata line(s): " + ", ".join(f"# {k}=" for k in missing))
    if len(rows) < 2:
        raise TooFewSamplesError(f"{source}: need at least 2 samples, got {len(rows)}")
    for (w0, _), (w1, _) in zip(rows, rows[1:]):
        if w1 <= w0:
            raise NonMonotoneSpectrumError(f"{source}: wavelengths not strictly increasing at {w0} -> {w1} nm")
    try:
        launch = float(meta["launch_dbm"])
        length = float(meta["length_km"])
    except ValueError:
        raise SpectrumFormatError(f"{source}: launch_dbm and length_km metadata must be numeric") from None
    direction = meta["direction"]
    if direction not in ("forward", "backward"):
        raise SpectrumFormatError(f"{source}: direction must be forward or backward, got {direction!r}")
    try:
        return RamanSpectrum(
            wavelengths_nm=tuple(w for w, _ in rows),
            density_dbm_per_nm=tuple(d for _, d in rows),
            launch_power_dbm=launch,
            fiber_length_km=length,
            direction=direction,
        )
    except ValueError as exc:
        raise SpectrumError(f"{source}: {exc}") from exc


def ingest_spectrum_csv(path: str | Path) -> RamanSpectrum:
    path = Path(path)
    return parse_spectrum_csv(path.read_text(encoding="utf-8"), str(path))


def format_spectrum_csv(spectrum: RamanSpectrum) -> str:
    lines = [
        f"# launch_dbm={spectrum.launch_power_dbm!r}",
        f"# length_km={spectrum.fiber_length_km!r}",
        f"# direction={spectrum.direction}",
        ",".join(SPECTRUM_HEADER),
    ]
    lines += [f"{w!r},{d!r}" for w, d in zip(spectrum.wavelengths_nm, spectrum.density_dbm_per_nm)]
    return "\n".join(lines) + "\n"


def fmt(value) -> str:
    if isinstance(value, float):
        return format(value, NUMBER_FORMAT)
    return str(value)


@dataclass
class ResultsTable:
    """Header-described rows; ``comments`` go out as ``# key=value`` lines."""

    columns: Sequence[str]
    rows: list[Sequence]
    comments: list[tuple[str, object]]
    trailer: list[tuple[str, object]]

    def to_csv(self) -> str:
        buf = io.StringIO()
        for key, value in self.comments:
            buf.write(f"# {key}={fmt(value)}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([fmt(v) for v in row])
        for key, value in self.trailer:
            buf.write(f"# {key}={fmt(value)}\n")
        return buf.getvalue()


def read_results_csv(text: str) -> tuple[list[str], list[list[float]], dict[str, str]]:
    """Parse a results CSV back into columns, numeric rows and ``#`` metadata."""
    meta: dict[str, str] = {}
    body = []
    for line in text.splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            meta[key.strip()] = value.strip()
        elif line.strip():
            body.append(line)
    reader = csv.reader(body)
    columns = next(reader)
    rows = [[float(x) for x in row] for row in reader]
    return columns, rows, meta


def key_value_csv(pairs: Iterable[tuple[str, object]]) -> str:
    return "".join(f"{k},{fmt(v)}\n" for k, v in pairs)
