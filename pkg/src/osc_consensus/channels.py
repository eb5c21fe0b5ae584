"""Channel implementations carrying symbols from encoders to decoders."""

import logging
from abc import ABC, abstractmethod
from typing import Dict, Iterable, List

from .packets import SymbolPacket, format_packet_log

logger = logging.getLogger(__name__)


class SymbolChannel(ABC):
    """Abstract symbol channel: one queue per receiving agent."""

    @abstractmethod
    def publish(self, packet: SymbolPacket, recipients: Iterable[int]) -> None:
        """Deliver a packet to every recipient. Zero symbols are not transmitted."""
        pass

    @abstractmethod
    def collect(self, recipient: int) -> List[SymbolPacket]:
        """Pop every packet queued for the recipient."""
        pass

    @abstractmethod
    def stats(self) -> Dict[str, int]:
        """Transmission counters."""
        pass


class InMemoryChannel(SymbolChannel):
    """Lossless in-process channel with bit accounting."""

    def __init__(self) -> None:
        self.queues: Dict[int, List[SymbolPacket]] = {}
        self.packets_sent = 0
        self.bits_sent = 0
        self.silent_slots = 0
        self._trace_packets = logger.isEnabledFor(logging.DEBUG)
        logger.debug("Initialized InMemoryChannel")

    def publish(self, packet: SymbolPacket, recipients: Iterable[int]) -> None:
        """Queue the packet for every recipient, or count silent slots for a zero symbol."""
        recipients = list(recipients)
        if packet.symbol == 0:
            self.silent_slots += len(recipients)
            return
        for recipient in recipients:
            self.queues.setdefault(recipient, []).append(packet)
            self.packets_sent += 1
            self.bits_sent += packet.bits
            if self._trace_packets:
                logger.debug(format_packet_log("queued", packet, recipient))

    def collect(self, recipient: int) -> List[SymbolPacket]:
        """Pop every packet queued for the recipient."""
        packets = self.queues.pop(recipient, [])
        if self._trace_packets:
            for packet in packets:
                logger.debug(format_packet_log("retrieved", packet, recipient))
        return packets

    def pending(self) -> int:
        """Packets queued but not yet collected."""
        return sum(len(packets) for packets in self.queues.values())

    def stats(self) -> Dict[str, int]:
        """Transmission counters for the run so far."""
        return {
            "packets_sent": self.packets_sent,
            "bits_sent": self.bits_sent,
            "silent_slots": self.silent_slots,
            "pending_packets": self.pending(),
        }
