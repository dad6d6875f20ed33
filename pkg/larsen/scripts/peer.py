"""Reference peer of :py:class:`~larsen.suppressors.ExternalSuppressor`

It answers the host over stdin/stdout (or a TCP port) with a trivial model. Faulty modes
reproduce peer failures. The :py:func:`serve` loop can be reused to host a trained model by
passing any callable mapping a (channels, frame_len) frame to frame_len output samples.
"""

import argparse
import socket
import sys
import time

import numpy as np

from larsen.suppressors.external import (
    MAGIC,
    SHUTDOWN_INDEX,
    _HANDSHAKE,
    _U32,
    SAMPLE_DTYPE,
    decode_frame,
    decode_handshake,
    encode_frame,
    encode_handshake_reply,
)

MODES = ("echo", "negate", "gain", "bad-magic", "truncate", "stall")


def _read(reader, n):
    data = reader.read(n)
    return data if data is not None else b""


def _send(writer, data):
    writer.write(data)
    writer.flush()


def make_model(mode="echo", channel=0, gain=1.0):
    if mode == "negate":
        return lambda frame: -frame[channel]
    elif mode == "gain":
        return lambda frame: gain * frame[channel]
    return lambda frame: frame[channel]


def serve(reader, writer, model=None, mode="echo", fail_at=10, stall=5.0):
    """Answer one host stream until shutdown or end of stream

    Parameters
    ----------
    reader : binary file-like
        stream from the host
    writer : binary file-like
        stream to the host
    model : callable, optional
        maps a float32 (channels, frame_len) frame to frame_len samples, by default echo of
        the first channel
    mode : str, optional
        :code:`"bad-magic"` answers the handshake with a wrong magic, :code:`"truncate"` sends
        half a reply at frame `fail_at` and closes, :code:`"stall"` stops answering for `stall`
        seconds at frame `fail_at`, by default "echo"
    fail_at : int, optional
        frame index of the failure of faulty modes, by default 10
    stall : float, optional
        stall duration in seconds, by default 5

    Returns
    -------
    int
        number of frames answered
    """
    model = model or make_model()
    data = _read(reader, len(MAGIC) + _HANDSHAKE.size)
    if len(data) == 0:
        return 0
    _, frame_len, _, n_channels = decode_handshake(data)
    if mode == "bad-magic":
        _send(writer, b"XXXX" + _U32.pack(0))
        return 0
    _send(writer, encode_handshake_reply())

    payload = n_channels * frame_len * SAMPLE_DTYPE.itemsize
    answered = 0
    while True:
        head = _read(reader, _U32.size)
        if len(head) < _U32.size:
            return answered
        (index,) = _U32.unpack(head)
        if index == SHUTDOWN_INDEX:
            return answered
        index, frame = decode_frame(head + _read(reader, payload), n_channels, frame_len)
        reply = encode_frame(index, np.asarray(model(frame), dtype=SAMPLE_DTYPE))
        if index >= fail_at and mode == "truncate":
            _send(writer, reply[: len(reply) // 2])
            return answered
        if index >= fail_at and mode == "stall":
            time.sleep(stall)
            return answered
        _send(writer, reply)
        answered += 1


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="larsen-peer", description="Reference peer of external suppressors"
    )
    parser.add_argument("--mode", type=str, choices=MODES, help="peer behaviour", default="echo")
    parser.add_argument("--channel", type=int, help="channel echoed back", default=0)
    parser.add_argument("--gain", type=float, help="gain of the gain mode", default=1.0)
    parser.add_argument("--fail-at", type=int, help="failing frame of faulty modes", default=10)
    parser.add_argument("--stall", type=float, help="stall duration in seconds", default=5.0)
    parser.add_argument(
        "--port", type=int, help="serve one connection on this TCP port instead of stdio", default=None
    )
    args = parser.parse_args(argv)

    model = make_model(args.mode, args.channel, args.gain)
    if args.port is None:
        serve(sys.stdin.buffer, sys.stdout.buffer, model, args.mode, args.fail_at, args.stall)
        return 0

    with socket.create_server(("127.0.0.1", args.port)) as server:
        connection, _ = server.accept()
        with connection, connection.makefile("rb") as reader, connection.makefile("wb") as writer:
            serve(reader, writer, model, args.mode, args.fail_at, args.stall)
    return 0


if __name__ == "__main__":
    sys.exit(main())
