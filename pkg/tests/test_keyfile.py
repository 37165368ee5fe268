import numpy as np
import pytest

from fmqkd.errors import KeyFileError
from fmqkd.keyfile import (
    HEADER_SIZE,
    NATIVE_BLOCK_BITS,
    decode_key_block,
    encode_key_block,
    read_key_file,
    write_key_file,
)


def test_native_block_round_trip(tmp_path):
    bits = np.random.default_rng(0).integers(0, 2, size=NATIVE_BLOCK_BITS).astype(np.uint8)
    path = tmp_path / "block.qkdr"
    write_key_file(path, bits)
    back = read_key_file(path)
    assert back.size == 65535
    assert np.array_equal(back, bits)
    # 65535 bits need 8192 payload bytes; one padding bit stays zero.
    assert path.stat().st_size == HEADER_SIZE + 8192


def test_golden_block_bytes():
    bits = np.array([1, 0, 1, 1, 0, 0, 1, 1, 1, 0, 1], dtype=np.uint8)
    # LSB-first packing: byte0 = 0b11001101, byte1 = 0b00000101.
    expected = b"QKDR" + b"\x01" + b"\x00\x00\x00" + b"\x0b\x00\x00\x00" + b"\xcd\x05"
    assert encode_key_block(bits) == expected
    assert np.array_equal(decode_key_block(expected), bits)


def test_empty_block_round_trip():
    assert decode_key_block(encode_key_block(np.array([], dtype=np.uint8))).size == 0


@pytest.mark.parametrize(
    "mutate",
    [
        lambda b: b"XKDR" + b[4:],                      # magic
        lambda b: b[:4] + b"\x02" + b[5:],              # version
        lambda b: b[:5] + b"\x01\x00\x00" + b[8:],      # reserved
        lambda b: b[:-1],                               # truncated payload
        lambda b: b + b"\x00",                          # trailing bytes
        lambda b: b[: HEADER_SIZE - 1],                 # truncated header
    ],
)
def test_malformed_blocks_rejected(mutate):
    good = encode_key_block(np.array([1, 0, 1], dtype=np.uint8))
    with pytest.raises(KeyFileError):
        decode_key_block(mutate(good))


def test_nonzero_padding_rejected():
    good = bytearray(encode_key_block(np.array([1, 0, 1], dtype=np.uint8)))
    good[-1] |= 0x80  # highest bit is padding for a 3-bit block
    with pytest.raises(KeyFileError):
        decode_key_block(bytes(good))


def test_bit_values_validated():
    with pytest.raises(KeyFileError):
        encode_key_block(np.array([0, 3], dtype=np.uint8))
