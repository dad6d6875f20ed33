"""Suppressors hosted by an external process (e.g. a trained network) over a byte stream

Wire protocol, all integers unsigned 32-bit little-endian, samples float32 little-endian:

- handshake: ``b"AHS1"`` + sample_rate + frame_len + hop + n_input_channels, answered by
  ``b"AHS1"`` + status (0 = ok)
- frame: frame_index + n_input_channels x frame_len samples, answered by frame_index (must
  match) + frame_len samples
- shutdown: frame_index ``0xFFFFFFFF`` without payload, after which the peer closes the stream

Each request carries the most recent `frame_len` samples of every channel (a sliding frame
advancing by `hop`). The last `hop` samples of the reply are the enhanced output.
"""

import selectors
import shlex
import socket
import struct
import subprocess
from time import monotonic
from typing import List, Optional, Tuple, Union

import numpy as np

from larsen.core.suppressor import Suppressor
from larsen.errors import (
    ConfigurationError,
    HandshakeError,
    PluginStreamError,
    PluginTimeoutError,
    ShapeError,
)

__all__ = ["ExternalSuppressor"]

MAGIC = b"AHS1"
SHUTDOWN_INDEX = 0xFFFFFFFF
STATUS_OK = 0
DEFAULT_DEADLINE = 0.1

_HANDSHAKE = struct.Struct("<4I")
_U32 = struct.Struct("<I")
SAMPLE_DTYPE = np.dtype("<f4")


def encode_handshake(sample_rate: int, frame_len: int, hop: int, n_channels: int) -> bytes:
    return MAGIC + _HANDSHAKE.pack(sample_rate, frame_len, hop, n_channels)


def decode_handshake(data: bytes) -> Tuple[int, int, int, int]:
    """(sample_rate, frame_len, hop, n_channels) from a host handshake"""
    if len(data) != 4 + _HANDSHAKE.size or data[:4] != MAGIC:
        raise HandshakeError(f"invalid handshake {data[:4]!r}")
    return _HANDSHAKE.unpack(data[4:])


def encode_handshake_reply(status: int = STATUS_OK) -> bytes:
    return MAGIC + _U32.pack(status)


def decode_handshake_reply(data: bytes) -> int:
    if len(data) != 4 + _U32.size or data[:4] != MAGIC:
        raise HandshakeError(f"peer answered with magic {data[:4]!r} instead of {MAGIC!r}")
    (status,) = _U32.unpack(data[4:])
    if status != STATUS_OK:
        raise HandshakeError(f"peer refused the stream configuration (status {status})")
    return status


def encode_frame(index: int, samples: np.ndarray) -> bytes:
    return _U32.pack(index) + np.ascontiguousarray(samples, dtype=SAMPLE_DTYPE).tobytes()


def decode_frame(data: bytes, n_channels: int, frame_len: int):
    """(frame_index, samples of shape (n_channels, frame_len))"""
    expected = _U32.size + n_channels * frame_len * SAMPLE_DTYPE.itemsize
    if len(data) != expected:
        raise PluginStreamError(f"frame of {len(data)} bytes, expected {expected}")
    (index,) = _U32.unpack(data[: _U32.size])
    samples = np.frombuffer(data[_U32.size :], dtype=SAMPLE_DTYPE).reshape(n_channels, frame_len)
    return index, samples


def encode_shutdown() -> bytes:
    return _U32.pack(SHUTDOWN_INDEX)


class PipeTransport:
    def __init__(self, command: Union[str, List[str]]):
        """Peer process spawned with its stdin/stdout as the stream"""
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.process = None

    def open(self):
        self.process = subprocess.Popen(
            self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE, bufsize=0
        )

    def write(self, data: bytes, frame=None):
        try:
            self.process.stdin.write(data)
            self.process.stdin.flush()
        except (BrokenPipeError, OSError) as e:
            raise PluginStreamError(f"peer closed its input ({e})", frame=frame)

    def read(self, n: int, timeout: float, frame=None) -> bytes:
        stdout = self.process.stdout
        chunks = []
        received = 0
        end = monotonic() + timeout
        with selectors.DefaultSelector() as selector:
            selector.register(stdout, selectors.EVENT_READ)
            while received < n:
                remaining = end - monotonic()
                if remaining <= 0 or not selector.select(remaining):
                    raise PluginTimeoutError(
                        f"peer did not answer within {timeout * 1e3:.0f} ms", frame=frame
                    )
                chunk = stdout.read1(n - received) if hasattr(stdout, "read1") else stdout.read(n - received)
                if not chunk:
                    raise PluginStreamError(
                        f"peer closed the stream after {received} of {n} bytes", frame=frame
                    )
                chunks.append(chunk)
                received += len(chunk)
        return b"".join(chunks)

    def close(self):
        if self.process is None:
            return
        for stream in (self.process.stdin, self.process.stdout):
            try:
                stream.close()
            except OSError:
                pass
        try:
            self.process.wait(timeout=1.0)
        except subprocess.TimeoutExpired:
            self.process.kill()
            self.process.wait()
        self.process = None


class SocketTransport:
    def __init__(self, address: Union[str, Tuple[str, int], socket.socket]):
        """Peer reached through a stream socket (``"host:port"``, a (host, port) tuple or an
        already connected socket)"""
        if isinstance(address, str):
            host, port = address.rsplit(":", 1)
            address = (host, int(port))
        self.address = address
        self.sock = None

    def open(self):
        if isinstance(self.address, socket.socket):
            self.sock = self.address
        else:
            self.sock = socket.create_connection(self.address, timeout=5.0)

    def write(self, data: bytes, frame=None):
        try:
            self.sock.settimeout(None)
            self.sock.sendall(data)
        except OSError as e:
            raise PluginStreamError(f"cannot send to peer ({e})", frame=frame)

    def read(self, n: int, timeout: float, frame=None) -> bytes:
        chunks = []
        received = 0
        end = monotonic() + timeout
        while received < n:
            remaining = end - monotonic()
            if remaining <= 0:
                raise PluginTimeoutError(
                    f"peer did not answer within {timeout * 1e3:.0f} ms", frame=frame
                )
            self.sock.settimeout(remaining)
            try:
                chunk = self.sock.recv(n - received)
            except socket.timeout:
                raise PluginTimeoutError(
                    f"peer did not answer within {timeout * 1e3:.0f} ms", frame=frame
                )
            if not chunk:
                raise PluginStreamError(
                    f"peer closed the stream after {received} of {n} bytes", frame=frame
                )
            chunks.append(chunk)
            received += len(chunk)
        return b"".join(chunks)

    def close(self):
        if self.sock is not None:
            try:
                self.sock.close()
            except OSError:
                pass
        self.sock = None


class ExternalSuppressor(Suppressor):
    def __init__(
        self,
        command: Optional[Union[str, List[str]]] = None,
        address: Optional[Union[str, Tuple[str, int], socket.socket]] = None,
        n_input_channels: int = 1,
        deadline: float = DEFAULT_DEADLINE,
        handshake_timeout: float = 10.0,
        latency: int = 0,
        name=None,
    ):
        """Suppressor running in a peer process, one blocking request per hop

        Parameters
        ----------
        command : str or list, optional
            command spawning the peer (stdin/stdout carry the stream), by default None
        address : str, tuple or socket, optional
            stream socket of a peer, used when `command` is None, by default None
        n_input_channels : int, optional
            channels sent per frame (2 or 3 behind a :py:class:`Cascade`), by default 1
        deadline : float, optional
            maximum wall-clock time of a frame round trip in seconds, by default 0.1
        handshake_timeout : float, optional
            maximum time for the peer to answer the handshake in seconds, by default 10
        latency : int, optional
            algorithmic latency declared by the peer model in hops, by default 0
        name : str, optional
            name of the suppressor, by default None
        """
        self.args = {
            "command": command,
            "address": address,
            "n_input_channels": n_input_channels,
            "deadline": deadline,
            "latency": latency,
        }
        super().__init__(name=name)
        if (command is None) == (address is None):
            raise ConfigurationError("provide exactly one of command or address")
        if n_input_channels < 1 or deadline <= 0 or latency < 0:
            raise ConfigurationError("invalid channel count, deadline or latency")
        self.command = command
        self.address = address
        self.n_channels = int(n_input_channels)
        self.deadline = deadline
        self.handshake_timeout = handshake_timeout
        self.latency = int(latency)
        self.transport = None
        self._index = 0

    def _connect(self):
        self.transport = (
            PipeTransport(self.command) if self.command is not None else SocketTransport(self.address)
        )
        self.transport.open()
        try:
            self.transport.write(
                encode_handshake(
                    self.sample_rate, self.config.frame_len, self.hop, self.n_channels
                )
            )
            reply = self.transport.read(8, self.handshake_timeout)
            decode_handshake_reply(reply)
        except Exception:
            self.transport.close()
            self.transport = None
            raise

    def setup(self):
        if self.transport is not None:
            self._close()
        self._connect()
        self._index = 0

    def reset(self):
        if self._index > 0:
            if isinstance(self.address, socket.socket):
                raise ConfigurationError("a suppressor on an already connected socket cannot be reset")
            # the peer holds state, start a fresh one
            self._close()
            self._connect()
        self._index = 0
        self._frame = np.zeros((self.n_channels, self.config.frame_len))

    def process(self, frame):
        hop = self.hop
        frame = np.asarray(frame, dtype=float).reshape(-1, hop)
        if frame.shape[0] != self.n_channels:
            raise ShapeError(f"expected {self.n_channels} channels, got {frame.shape[0]}")
        self._frame = np.concatenate([self._frame[:, hop:], frame], axis=1)

        index = self._index
        self.transport.write(encode_frame(index, self._frame), frame=index)
        frame_len = self.config.frame_len
        data = self.transport.read(_U32.size + frame_len * SAMPLE_DTYPE.itemsize, self.deadline, frame=index)
        reply_index, samples = decode_frame(data, 1, frame_len)
        if reply_index != index:
            raise PluginStreamError(
                f"peer answered frame {reply_index} instead of {index}", frame=index
            )
        self._index += 1
        return samples[0, -hop:].astype(float)

    def _close(self):
        if self.transport is None:
            return
        try:
            self.transport.write(encode_shutdown())
        except PluginStreamError:
            pass
        self.transport.close()
        self.transport = None

    def terminate(self):
        self._close()

    def __del__(self):
        try:
            self._close()
        except Exception:
            pass
