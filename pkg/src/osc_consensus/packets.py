"""Symbol packets exchanged between encoders and decoders."""

from dataclasses import dataclass


@dataclass(frozen=True)
class SymbolPacket:
    """One quantized symbol sent by an agent at step t."""
    sender: int
    t: int
    symbol: int
    bits: int


def format_packet_log(action: str, packet: SymbolPacket, recipient: int) -> str:
    """Format a packet log entry with complete details."""
    return f"""
PACKET {action.upper()}
FROM: agent {packet.sender}
TO: agent {recipient}
STEP: {packet.t}
SYMBOL: {packet.symbol:+d} ({packet.bits} bits)
{"=" * 80}"""
