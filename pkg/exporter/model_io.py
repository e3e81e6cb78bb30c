"""
This module is the entry point of the exporter package.

Functions:
    write_model: Serializes a model to LP or MPS bytes and optionally writes them out.
    parse_model: Reads LP or MPS bytes back into a model.
    format_for_path: Format implied by a file suffix.
"""
import logging
from pathlib import Path
from typing import BinaryIO

from errors import ModelSyntaxError
from exporter.lp_format import parse_lp, write_lp
from exporter.mps_format import parse_mps, write_mps
from exporter.text_model import ExportOptions, ModelFormat, check_names
from milp.builder import MilpModel

logger = logging.getLogger(__name__)

ENCODING: str = 'ascii'


def write_model(model: MilpModel, options: ExportOptions | None = None,
                sink: str | Path | BinaryIO | None = None) -> bytes:
    """
    Serialize a model; the output is identical for identical inputs.

    Args:
        model (MilpModel): Model to write.
        options (ExportOptions | None): Format and precision, LP with 17 digits by default.
        sink (str | Path | BinaryIO | None): File path or binary stream receiving the bytes.

    Returns:
        bytes: The serialized model.

    Raises:
        NameCollision: If names repeat or cannot be written.
        MissingObjective: If the objective is zero.
    """
    options = options or ExportOptions()
    check_names(model)
    writer = write_lp if options.format is ModelFormat.LP else write_mps
    data = writer(model, options).encode(ENCODING)
    if isinstance(sink, (str, Path)):
        Path(sink).write_bytes(data)
        logger.info('Wrote %s model %s (%d variables, %d rows) to %s', options.format.value.upper(), model.name,
                    model.num_vars, model.num_rows, sink)
    elif sink is not None:
        sink.write(data)
    return data


def parse_model(data: bytes | str, fmt: ModelFormat = ModelFormat.LP) -> MilpModel:
    """
    Parse LP or MPS text into a model.

    Raises:
        ModelSyntaxError: If the text is malformed, carrying the 1-based line number.
    """
    text = data
    if isinstance(data, bytes):
        try:
            text = data.decode(ENCODING)
        except UnicodeDecodeError as exc:
            lineno = data[:exc.start].count(b'\n') + 1
            raise ModelSyntaxError(f'byte 0x{data[exc.start]:02x} is not {ENCODING}', lineno) from exc
    return parse_lp(text) if ModelFormat(fmt) is ModelFormat.LP else parse_mps(text)


def format_for_path(path: str | Path, default: ModelFormat = ModelFormat.LP) -> ModelFormat:
    suffix = Path(path).suffix.lower().lstrip('.')
    return ModelFormat(suffix) if suffix in {f.value for f in ModelFormat} else default
