"""CAN frame model, raw log parsing, and declarative signal decoding.

Decode tables map (arbitration id, bit field) to named engineering-unit
signals.  Little-endian signals use Intel LSB-first start bits; big-endian
signals use the Motorola convention where start_bit marks the most
significant bit of the field.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

from .errors import SpecOutOfRange, UnreadableFile

DECODE_TABLE_HEADER = "# avt-decode-table v1"


@dataclass(frozen=True)
class CanFrame:
    ts: int  # epoch microseconds
    arbitration_id: int
    dlc: int
    payload: bytes

    def __post_init__(self):
        if not 0 <= self.dlc <= 8:
            raise ValueError(f"dlc out of range: {self.dlc}")
        if len(self.payload) != self.dlc:
            raise ValueError("payload length must equal dlc")

    def to_csv_row(self) -> str:
        return f"{self.ts},{self.arbitration_id:x},{self.dlc},{self.payload.hex()}"


@dataclass(frozen=True)
class SignalSpec:
    name: str
    arbitration_id: int
    start_bit: int
    bit_length: int
    byte_order: str = "little"  # little | big
    signed: bool = False
    scale: float = 1.0
    offset: float = 0.0
    unit: str = ""

    def __post_init__(self):
        if self.byte_order not in ("little", "big"):
            raise ValueError(f"byte_order must be little or big: {self.byte_order}")
        if not 0 <= self.start_bit <= 63:
            raise ValueError(f"start_bit out of range: {self.start_bit}")
        if not 1 <= self.bit_length <= 64:
            raise ValueError(f"bit_length out of range: {self.bit_length}")

    def quantum(self) -> float:
        return abs(self.scale)


def _motorola_bit_positions(start_bit: int, length: int) -> list[int]:
    """Absolute bit positions (byte*8 + bit, bit 0 = LSB) from MSB to LSB."""
    positions = []
    byte_i, bit_i = divmod(start_bit, 8)
    for _ in range(length):
        positions.append(byte_i * 8 + bit_i)
        if bit_i == 0:
            byte_i += 1
            bit_i = 7
        else:
            bit_i -= 1
    return positions


def extract_signal(frame: CanFrame, spec: SignalSpec) -> float | None:
    """Decode one signal from one frame; None when the id does not match."""
    if frame.arbitration_id != spec.arbitration_id:
        return None
    n_bits = frame.dlc * 8
    if spec.byte_order == "little":
        if spec.start_bit + spec.bit_length > n_bits:
            raise SpecOutOfRange(
                f"{spec.name}: bits [{spec.start_bit},{spec.start_bit + spec.bit_length}) "
                f"exceed {n_bits}-bit payload"
            )
        raw = int.from_bytes(frame.payload, "little")
        raw = (raw >> spec.start_bit) & ((1 << spec.bit_length) - 1)
    else:
        positions = _motorola_bit_positions(spec.start_bit, spec.bit_length)
        if max(positions) >= n_bits or min(positions) < 0:
            raise SpecOutOfRange(f"{spec.name}: big-endian field exceeds payload")
        raw = 0
        for pos in positions:
            byte_i, bit_i = divmod(pos, 8)
            raw = (raw << 1) | ((frame.payload[byte_i] >> bit_i) & 1)
    if spec.signed and raw >= 1 << (spec.bit_length - 1):
        raw -= 1 << spec.bit_length
    if spec.scale == 1.0 and spec.offset == 0.0:
        return raw  # exact, even past float precision
    return raw * spec.scale + spec.offset


def pack_signal(spec: SignalSpec, value: float, payload: bytearray | None = None) -> bytearray:
    """Encode an engineering value into an 8-byte payload (inverse of extract_signal)."""
    if payload is None:
        payload = bytearray(8)
    raw = round((value - spec.offset) / spec.scale)
    if spec.signed:
        lo, hi = -(1 << (spec.bit_length - 1)), (1 << (spec.bit_length - 1)) - 1
    else:
        lo, hi = 0, (1 << spec.bit_length) - 1
    raw = max(lo, min(hi, raw))
    if raw < 0:
        raw += 1 << spec.bit_length
    if spec.byte_order == "little":
        base = int.from_bytes(payload, "little")
        mask = ((1 << spec.bit_length) - 1) << spec.start_bit
        base = (base & ~mask) | (raw << spec.start_bit)
        payload[:] = base.to_bytes(len(payload), "little")
    else:
        positions = _motorola_bit_positions(spec.start_bit, spec.bit_length)
        for i, pos in enumerate(positions):
            bit = (raw >> (spec.bit_length - 1 - i)) & 1
            byte_i, bit_i = divmod(pos, 8)
            if bit:
                payload[byte_i] |= 1 << bit_i
            else:
                payload[byte_i] &= ~(1 << bit_i)
    return payload


@dataclass
class DecodeTable:
    specs: list[SignalSpec] = field(default_factory=list)

    def __post_init__(self):
        names = [s.name for s in self.specs]
        if len(names) != len(set(names)):
            raise ValueError("signal names must be unique")
        self._by_id: dict[int, list[SignalSpec]] = {}
        for s in self.specs:
            self._by_id.setdefault(s.arbitration_id, []).append(s)

    def specs_for(self, arbitration_id: int) -> list[SignalSpec]:
        return self._by_id.get(arbitration_id, [])

    def spec(self, name: str) -> SignalSpec:
        for s in self.specs:
            if s.name == name:
                return s
        raise KeyError(name)

    def signal_names(self) -> list[str]:
        return [s.name for s in self.specs]

    def save(self, path: Path) -> None:
        lines = [
            DECODE_TABLE_HEADER,
            "# name arbitration_id start_bit bit_length byte_order signedness scale offset unit",
        ]
        for s in self.specs:
            lines.append(
                f"{s.name} 0x{s.arbitration_id:x} {s.start_bit} {s.bit_length} "
                f"{s.byte_order} {'signed' if s.signed else 'unsigned'} "
                f"{s.scale:g} {s.offset:g} {s.unit or '-'}"
            )
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path: Path) -> "DecodeTable":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as e:
            raise UnreadableFile(str(path)) from e
        lines = text.splitlines()
        if not lines or lines[0].strip() != DECODE_TABLE_HEADER:
            raise ValueError(f"{path}: missing decode-table header line")
        specs = []
        for line in lines[1:]:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 9:
                raise ValueError(f"{path}: bad spec line: {line!r}")
            name, arb, start, length, order, signedness, scale, offset, unit = parts
            specs.append(
                SignalSpec(
                    name=name,
                    arbitration_id=int(arb, 16) if arb.startswith("0x") else int(arb),
                    start_bit=int(start),
                    bit_length=int(length),
                    byte_order=order,
                    signed=(signedness == "signed"),
                    scale=float(scale),
                    offset=float(offset),
                    unit="" if unit == "-" else unit,
                )
            )
        return cls(specs=specs)


# per-signal ordered (ts, value) points
SignalTimeline = dict[str, list[tuple[int, float]]]


def parse_raw_can_csv(path: Path) -> tuple[list[CanFrame], int]:
    """Parse a data_can.csv file; returns (frames, rejected row count).

    Malformed rows (torn final lines, bad hex, dlc/payload mismatch) are
    counted and skipped rather than aborting the parse.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise UnreadableFile(str(path)) from e
    frames: list[CanFrame] = []
    rejects = 0
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("ts_micro"):  # header row
            continue
        parts = line.split(",")
        if len(parts) != 4:
            rejects += 1
            continue
        try:
            ts = int(parts[0])
            arb = int(parts[1], 16)
            dlc = int(parts[2])
            payload = bytes.fromhex(parts[3]) if parts[3] else b""
            frames.append(CanFrame(ts=ts, arbitration_id=arb, dlc=dlc, payload=payload))
        except ValueError:
            rejects += 1
    return frames, rejects


def serialize_can_csv(frames: list[CanFrame], path: Path, header: bool = True) -> None:
    with open(path, "w", newline="") as f:
        if header:
            f.write("ts_micro,arbitration_id,data_length,packet_data\n")
        for fr in frames:
            f.write(fr.to_csv_row() + "\n")


def decode_trip(frames: list[CanFrame], table: DecodeTable) -> SignalTimeline:
    """Decode every frame against every matching spec, preserving frame order."""
    timeline: SignalTimeline = {name: [] for name in table.signal_names()}
    for frame in frames:
        for spec in table.specs_for(frame.arbitration_id):
            value = extract_signal(frame, spec)
            if value is not None:
                timeline[spec.name].append((frame.ts, value))
    return timeline


def read_frame_csv(path: Path) -> list[tuple[int, int]]:
    """Read a camera ``frame,ts_micro`` CSV into (frame_id, ts) pairs."""
    rows: list[tuple[int, int]] = []
    with open(path, newline="") as f:
        for row in csv.reader(f):
            if not row or row[0] == "frame":
                continue
            if len(row) != 2:
                continue
            try:
                rows.append((int(row[0]), int(row[1])))
            except ValueError:
                continue
    return rows
