"""Wire encoding for values: one constant per frame, newline-terminated.

The encoding is a textual tag-plus-body scheme chosen so that a frame
payload can never contain the separator octet: the only place a raw
newline could appear is inside a string literal, and those are escaped.
That makes framing a plain split on 0x0A, and the protocol pleasant to
poke at with netcat.

    Signal            !
    Bool              t        f
    Int               i1910    i-7
    Rat               r11/2    r-3/4
    Str               s"postNext"      escapes: \\\\  \\"  \\n
    Tuple             (i1910,i5,i500)  nested freely, () is empty
    internal site     n"let"
    remote site       x"10.0.0.5":44600:0

A call or response is exactly one frame; a response is additionally
delimited by the peer closing the connection.
"""

from __future__ import annotations

from fractions import Fraction

from .values import (
    FALSE,
    SIGNAL,
    TRUE,
    Bool,
    Const,
    Int,
    InternalSite,
    Rat,
    RemoteSite,
    Signal,
    Str,
    TupleV,
)

SEPARATOR = b"\n"


class DecodeError(ValueError):
    """Input is not a well-formed encoded constant."""


def _quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n") + '"'


def serialize_const(c: Const) -> str:
    match c:
        case Signal():
            return "!"
        case Bool(b):
            return "t" if b else "f"
        case Int(n):
            return f"i{n}"
        case Rat(q):
            return f"r{q.numerator}/{q.denominator}"
        case Str(s):
            return "s" + _quote(s)
        case TupleV(items):
            return "(" + ",".join(serialize_const(v) for v in items) + ")"
        case InternalSite(name):
            return "n" + _quote(name)
        case RemoteSite(host, port, seq):
            return "x" + _quote(host) + f":{port}:{seq}"
    raise TypeError(f"not a value: {c!r}")


def encode_frame(c: Const) -> bytes:
    data = serialize_const(c).encode("utf-8")
    assert SEPARATOR not in data
    return data + SEPARATOR


class _Decoder:
    def __init__(self, text: str) -> None:
        self.text = text
        self.pos = 0

    def error(self, why: str) -> DecodeError:
        return DecodeError(f"{why} at offset {self.pos}")

    def peek(self) -> str:
        if self.pos >= len(self.text):
            raise self.error("truncated value")
        return self.text[self.pos]

    def take(self) -> str:
        ch = self.peek()
        self.pos += 1
        return ch

    def expect(self, ch: str) -> None:
        if self.take() != ch:
            self.pos -= 1
            raise self.error(f"expected {ch!r}")

    def integer(self) -> int:
        start = self.pos
        if self.peek() == "-":
            self.pos += 1
        while self.pos < len(self.text) and self.text[self.pos].isdigit():
            self.pos += 1
        if self.pos == start or self.text[start:self.pos] == "-":
            raise self.error("expected digits")
        return int(self.text[start : self.pos])

    def quoted(self) -> str:
        self.expect('"')
        out: list[str] = []
        while True:
            ch = self.take()
            if ch == '"':
                return "".join(out)
            if ch != "\\":
                out.append(ch)
                continue
            esc = self.take()
            if esc == "n":
                out.append("\n")
            elif esc in ('"', "\\"):
                out.append(esc)
            else:
                self.pos -= 1
                raise self.error(f"bad escape \\{esc}")

    def value(self) -> Const:
        tag = self.take()
        if tag == "!":
            return SIGNAL
        if tag == "t":
            return TRUE
        if tag == "f":
            return FALSE
        if tag == "i":
            return Int(self.integer())
        if tag == "r":
            num = self.integer()
            self.expect("/")
            den = self.integer()
            if den <= 0:
                raise self.error("nonpositive denominator")
            q = Fraction(num, den)
            if q.denominator == 1:
                return Int(q.numerator)
            return Rat(q)
        if tag == "s":
            return Str(self.quoted())
        if tag == "n":
            return InternalSite(self.quoted())
        if tag == "x":
            host = self.quoted()
            self.expect(":")
            port = self.integer()
            self.expect(":")
            seq = self.integer()
            return RemoteSite(host, port, seq)
        if tag == "(":
            items: list[Const] = []
            if self.peek() == ")":
                self.pos += 1
                return TupleV(())
            while True:
                items.append(self.value())
                ch = self.take()
                if ch == ")":
                    return TupleV(tuple(items))
                if ch != ",":
                    self.pos -= 1
                    raise self.error("expected ',' or ')'")
        self.pos -= 1
        raise self.error(f"unknown tag {tag!r}")


def deserialize_const(text: str) -> Const:
    dec = _Decoder(text)
    v = dec.value()
    if dec.pos != len(text):
        raise dec.error("trailing garbage")
    return v


def decode_frame(payload: bytes) -> Const:
    try:
        text = payload.decode("utf-8")
    except UnicodeDecodeError as e:
        raise DecodeError(f"payload is not UTF-8: {e}") from None
    return deserialize_const(text)


def decode_response(data: bytes) -> Const:
    """Decode an accumulated response: one frame, then connection close.

    The trailing separator is required; anything after it is garbage."""
    if not data.endswith(SEPARATOR):
        raise DecodeError("response did not end with the frame separator")
    body = data[: -len(SEPARATOR)]
    if SEPARATOR in body:
        raise DecodeError("more than one frame in a response")
    return decode_frame(body)


class FrameReader:
    """Incremental splitter: feed raw bytes, get complete frame payloads.

    Two frames written in one TCP burst come back as two payloads; a
    frame split across bursts comes back once it completes.
    """

    def __init__(self) -> None:
        self._buf = bytearray()

    def feed(self, data: bytes) -> list[bytes]:
        self._buf.extend(data)
        out: list[bytes] = []
        while True:
            i = self._buf.find(SEPARATOR)
            if i < 0:
                return out
            out.append(bytes(self._buf[:i]))
            del self._buf[: i + len(SEPARATOR)]

    @property
    def pending(self) -> int:
        """Bytes of an incomplete trailing frame, 0 when clean."""
        return len(self._buf)
