import socket
import sys
import threading

import numpy as np
import pytest

from larsen import StftConfig, TimeSignal
from larsen.errors import (
    ConfigurationError,
    HandshakeError,
    PluginStreamError,
    PluginTimeoutError,
)
from larsen.scripts.peer import make_model, serve
from larsen.suppressors import Cascade, ExternalSuppressor, Passthrough
from larsen.suppressors.external import (
    decode_frame,
    decode_handshake,
    encode_frame,
    encode_handshake,
)

PEER = [sys.executable, "-m", "larsen.scripts.peer"]

np.random.seed(3)
signal = TimeSignal(np.random.normal(0, 0.1, 4000))
as_float32 = signal.samples.astype(np.float32).astype(float)


def peer(mode, *args, deadline=2.0, **kwargs):
    return ExternalSuppressor(PEER + ["--mode", mode, *args], deadline=deadline, **kwargs)


def test_wire_codec():
    data = encode_handshake(16000, 512, 256, 2)
    assert len(data) == 20
    assert decode_handshake(data) == (16000, 512, 256, 2)
    with pytest.raises(HandshakeError):
        decode_handshake(b"XXXX" + data[4:])

    frame = np.arange(6, dtype=float).reshape(2, 3)
    index, samples = decode_frame(encode_frame(7, frame), 2, 3)
    assert index == 7 and np.array_equal(samples, frame)
    with pytest.raises(PluginStreamError):
        decode_frame(encode_frame(7, frame)[:-1], 2, 3)


def test_echo_is_bit_exact():
    out = peer("echo")(signal)
    assert np.array_equal(out.samples, as_float32)


def test_negate():
    out = peer("negate")(signal)
    assert np.array_equal(out.samples, -as_float32)


def test_deployable_profile():
    out = peer("echo")(signal, StftConfig.deployable())
    assert np.array_equal(out.samples, as_float32)


def test_long_stream():
    long = TimeSignal(np.random.default_rng(4).normal(0, 0.1, 10000 * 64))
    out = peer("echo")(long, StftConfig.deployable())
    assert np.array_equal(out.samples, long.samples.astype(np.float32).astype(float))


def test_bad_magic():
    with pytest.raises(HandshakeError, match="magic"):
        peer("bad-magic")(signal)


def test_truncated_reply():
    with pytest.raises(PluginStreamError) as exc:
        peer("truncate", "--fail-at", "3")(signal)
    assert exc.value.frame == 3


def test_stalled_peer():
    with pytest.raises(PluginTimeoutError, match="did not answer") as exc:
        peer("stall", "--fail-at", "2", "--stall", "1.0", deadline=0.2)(signal)
    assert exc.value.frame == 2


def test_socket_peer():
    host, remote = socket.socketpair()
    reader, writer = remote.makefile("rb"), remote.makefile("wb")
    answered = []
    thread = threading.Thread(
        target=lambda: answered.append(serve(reader, writer, make_model("gain", gain=0.5)))
    )
    thread.start()
    out = ExternalSuppressor(address=host, deadline=2.0)(signal)
    thread.join(timeout=5)
    remote.close()
    assert np.array_equal(out.samples, (0.5 * signal.samples.astype(np.float32)).astype(np.float32).astype(float))
    assert answered == [int(np.ceil(len(signal) / 256))]


def test_cascade_channels():
    cascade = Cascade(Passthrough(), peer("echo", "--channel", "1", n_input_channels=2))
    out = cascade(signal)
    assert np.array_equal(out.samples, as_float32)


def test_invalid_arguments():
    with pytest.raises(ConfigurationError, match="exactly one"):
        ExternalSuppressor()
    with pytest.raises(ConfigurationError, match="exactly one"):
        ExternalSuppressor(command="x", address="localhost:1")
