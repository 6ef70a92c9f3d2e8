"""Small PDF text extractor.

Covers the common case of digitally produced PDFs: content streams
stored plain, flate-compressed, or behind an ascii85/asciihex wrapper,
whose text is drawn with Tj / TJ / ' operators. That is enough for the
files the pipeline downloads from publishers; scanned or exotic PDFs
come back empty and the caller decides what to do about it. Encrypted
files are rejected outright.
"""

from __future__ import annotations

import base64
import re
import zlib

_STREAM = re.compile(rb"<<(.*?)>>\s*stream\r?\n", re.DOTALL)
_TEXT_BLOCK = re.compile(rb"BT(.*?)ET", re.DOTALL)
# string-or-array argument immediately followed by a text-showing operator
_SHOW = re.compile(rb"(\((?:\\.|[^\\()])*\)|\[(?:\\.|[^\]])*\])\s*(Tj|TJ|'|\")")
_STRING = re.compile(rb"\((?:\\.|[^\\()])*\)")

_ESCAPES = {
    b"n": b"\n",
    b"r": b"\r",
    b"t": b"\t",
    b"b": b"\b",
    b"f": b"\f",
    b"(": b"(",
    b")": b")",
    b"\\": b"\\",
}


def _unescape(raw: bytes) -> bytes:
    out = bytearray()
    i = 0
    while i < len(raw):
        ch = raw[i : i + 1]
        if ch != b"\\":
            out += ch
            i += 1
            continue
        nxt = raw[i + 1 : i + 2]
        if nxt in _ESCAPES:
            out += _ESCAPES[nxt]
            i += 2
        elif nxt.isdigit():
            digits = raw[i + 1 : i + 4]
            span = 1
            while span < 3 and span < len(digits) and digits[:span + 1].isdigit():
                span += 1
            out.append(int(digits[:span], 8) & 0xFF)
            i += 1 + span
        else:
            i += 1
    return bytes(out)


def _literal(token: bytes) -> str:
    return _unescape(token[1:-1]).decode("latin-1")


_FILTER_NAMES = re.compile(rb"/(\w+Decode)\b")


def _decode_stream(header: bytes, body: bytes) -> bytes | None:
    """Apply the stream's filter chain; None when a filter is unknown or
    the payload is corrupt."""
    filters = _FILTER_NAMES.findall(header)
    for name in filters:
        if name == b"ASCII85Decode":
            payload = body.strip()
            if payload.startswith(b"<~"):
                payload = payload[2:]
            if payload.endswith(b"~>"):
                payload = payload[:-2]
            try:
                body = base64.a85decode(payload)
            except ValueError:
                return None
        elif name == b"ASCIIHexDecode":
            payload = body.strip().rstrip(b">")
            try:
                body = bytes.fromhex(payload.decode("ascii").replace("\n", "").replace(" ", ""))
            except (ValueError, UnicodeDecodeError):
                return None
        elif name == b"FlateDecode":
            try:
                body = zlib.decompress(body)
            except zlib.error:
                return None
        else:
            return None
    return body


def _stream_texts(data: bytes):
    for match in _STREAM.finditer(data):
        header = match.group(1)
        start = match.end()
        end = data.find(b"endstream", start)
        if end < 0:
            continue
        decoded = _decode_stream(header, data[start:end].rstrip(b"\r\n"))
        if decoded is not None:
            yield decoded


def _block_text(block: bytes) -> str:
    parts = []
    for arg, op in _SHOW.findall(block):
        if arg.startswith(b"("):
            parts.append(_literal(arg))
        else:
            # TJ array: strings interleaved with kerning numbers
            parts.append("".join(_literal(s) for s in _STRING.findall(arg)))
        if op in (b"'", b'"'):
            parts.append("\n")
    return "".join(parts)


def extract_text(path: str) -> str:
    """Plain text of a PDF file, empty string when nothing extractable."""
    with open(path, "rb") as handle:
        data = handle.read()
    if not data.startswith(b"%PDF"):
        raise ValueError(f"{path} is not a PDF file")
    if b"/Encrypt" in data:
        raise ValueError(f"{path} is encrypted")
    lines = []
    for body in _stream_texts(data):
        for block in _TEXT_BLOCK.findall(body):
            text = _block_text(block)
            if text.strip():
                lines.append(text)
    return "\n".join(lines)
