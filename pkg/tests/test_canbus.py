import pytest
from hypothesis import given, strategies as st

from avt.canbus import (
    CanFrame,
    DecodeTable,
    SignalSpec,
    decode_trip,
    extract_signal,
    pack_signal,
    parse_raw_can_csv,
    serialize_can_csv,
)
from avt.errors import SpecOutOfRange


def oracle_extract(payload: bytes, start_bit: int, length: int, byte_order: str, signed: bool):
    """Bit-twiddling oracle: build the raw value one bit at a time."""
    def bit(pos):
        return (payload[pos // 8] >> (pos % 8)) & 1

    if byte_order == "little":
        raw = 0
        for i in range(length):
            raw |= bit(start_bit + i) << i
    else:
        # motorola: start_bit is the MSB; walk down within the byte, then
        # to bit 7 of the next byte
        raw = 0
        byte_i, bit_i = divmod(start_bit, 8)
        for _ in range(length):
            raw = (raw << 1) | bit(byte_i * 8 + bit_i)
            if bit_i == 0:
                byte_i, bit_i = byte_i + 1, 7
            else:
                bit_i -= 1
    if signed and raw >= 1 << (length - 1):
        raw -= 1 << length
    return raw


class TestExtractSignal:
    def test_little_endian_16bit_scaled(self):
        spec = SignalSpec("speed", 0x155, 0, 16, "little", False, 0.01, 0.0)
        frame = CanFrame(0, 0x155, 8, bytes.fromhex("1027000000000000"))
        # oracle: 0x2710 = 10000, x 0.01
        assert oracle_extract(frame.payload, 0, 16, "little", False) == 10000
        assert extract_signal(frame, spec) == pytest.approx(100.00)

    def test_unsigned_byte_identity(self):
        spec = SignalSpec("x", 0x10, 0, 8, "little", False, 1.0, 0.0)
        assert extract_signal(CanFrame(0, 0x10, 1, b"\xff"), spec) == 255

    def test_signed_byte_twos_complement(self):
        spec = SignalSpec("x", 0x10, 0, 8, "little", True, 1.0, 0.0)
        assert extract_signal(CanFrame(0, 0x10, 1, b"\xff"), spec) == -1

    def test_id_mismatch_returns_none(self):
        spec = SignalSpec("x", 0x10, 0, 8)
        assert extract_signal(CanFrame(0, 0x11, 1, b"\xff"), spec) is None

    def test_out_of_range_bits(self):
        spec = SignalSpec("x", 0x10, 0, 16)
        with pytest.raises(SpecOutOfRange):
            extract_signal(CanFrame(0, 0x10, 1, b"\xff"), spec)

    @given(
        payload=st.binary(min_size=8, max_size=8),
        start=st.integers(0, 63),
        length=st.integers(1, 64),
        order=st.sampled_from(["little", "big"]),
        signed=st.booleans(),
    )
    def test_matches_bit_oracle(self, payload, start, length, order, signed):
        spec = SignalSpec("x", 0x99, start, length, order, signed, 1.0, 0.0)
        frame = CanFrame(0, 0x99, 8, payload)
        if order == "little" and start + length > 64:
            with pytest.raises(SpecOutOfRange):
                extract_signal(frame, spec)
            return
        if order == "big":
            # motorola walk may run past byte 7
            byte_i, bit_i, ok = start // 8, start % 8, True
            for _ in range(length):
                if byte_i > 7:
                    ok = False
                    break
                byte_i, bit_i = (byte_i + 1, 7) if bit_i == 0 else (byte_i, bit_i - 1)
            if not ok:
                with pytest.raises(SpecOutOfRange):
                    extract_signal(frame, spec)
                return
        assert extract_signal(frame, spec) == oracle_extract(payload, start, length, order, signed)

    @given(
        start=st.integers(0, 48),
        length=st.integers(1, 16),
        order=st.sampled_from(["little", "big"]),
        signed=st.booleans(),
        data=st.data(),
    )
    def test_pack_extract_inverse(self, start, length, order, signed, data):
        if order == "little" and start + length > 64:
            return
        lo = -(1 << (length - 1)) if signed else 0
        hi = (1 << (length - 1)) - 1 if signed else (1 << length) - 1
        raw = data.draw(st.integers(lo, hi))
        spec = SignalSpec("x", 0x42, start, length, order, signed, 1.0, 0.0)
        payload = pack_signal(spec, raw)
        frame = CanFrame(0, 0x42, 8, bytes(payload))
        assert extract_signal(frame, spec) == raw


class TestRawCsv:
    def test_reference_row(self, tmp_path):
        path = tmp_path / "data_can.csv"
        path.write_text("100,155,8,1027000000000000\n")
        frames, rejects = parse_raw_can_csv(path)
        assert rejects == 0
        assert frames == [CanFrame(100, 0x155, 8, bytes.fromhex("1027000000000000"))]

    def test_empty_file(self, tmp_path):
        path = tmp_path / "data_can.csv"
        path.write_text("")
        assert parse_raw_can_csv(path) == ([], 0)

    def test_torn_final_row_rejected(self, tmp_path):
        path = tmp_path / "data_can.csv"
        path.write_text("100,155,8,1027000000000000\n200,155,8,10")
        frames, rejects = parse_raw_can_csv(path)
        assert len(frames) == 1
        assert rejects == 1

    def test_parse_serialize_identity(self, tmp_path):
        frames = [
            CanFrame(100, 0x155, 8, bytes.fromhex("1027000000000000")),
            CanFrame(140, 0x280, 2, bytes.fromhex("01ff")),
            CanFrame(180, 0x155, 0, b""),
        ]
        path = tmp_path / "out.csv"
        serialize_can_csv(frames, path)
        parsed, rejects = parse_raw_can_csv(path)
        assert rejects == 0
        assert parsed == frames


class TestDecodeTrip:
    def test_speed_timeline(self, decode_table):
        spec = decode_table.spec("speed")
        frames = [
            CanFrame(0, 0x155, 8, bytes(pack_signal(spec, 10.0))),
            CanFrame(40_000, 0x155, 8, bytes(pack_signal(spec, 12.0))),
        ]
        timeline = decode_trip(frames, decode_table)
        assert timeline["speed"] == [(0, 10.0), (40_000, 12.0)]

    def test_empty_table(self):
        frames = [CanFrame(0, 0x155, 1, b"\x01")]
        assert decode_trip(frames, DecodeTable([])) == {}

    def test_two_signals_one_id(self):
        table = DecodeTable(
            [
                SignalSpec("a", 0x20, 0, 8, "little", False, 1.0, 0.0),
                SignalSpec("b", 0x20, 8, 8, "little", False, 1.0, 0.0),
            ]
        )
        frames = [CanFrame(5, 0x20, 2, b"\x01\x02")]
        timeline = decode_trip(frames, table)
        assert timeline["a"] == [(5, 1)]
        assert timeline["b"] == [(5, 2)]


def test_table_text_round_trip(tmp_path, decode_table):
    path = tmp_path / "table.txt"
    decode_table.save(path)
    loaded = DecodeTable.load(path)
    assert loaded.specs == decode_table.specs


def test_table_requires_header(tmp_path):
    path = tmp_path / "table.txt"
    path.write_text("speed 0x155 0 16 little unsigned 0.01 0 m/s\n")
    with pytest.raises(ValueError):
        DecodeTable.load(path)
