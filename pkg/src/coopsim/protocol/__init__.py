from .bandwidth import BandwidthLedger, BandwidthReport, bandwidth_totals, to_mbps
from .exchange import Exchanger, ExchangeResult, Sensing, fuse, run_exchange
from .messages import Round1Message, Round2Message, Round2Request, WireFormatError
from .selection import (CommScope, SelectionScope, StickyRandomSelector, Strategy,
                        build_selection_scope, object_utility, select_comm_scope,
                        select_random_scope, vehicle_utility)
from .transport import InProcTransport, UdpTransport, make_transport

__all__ = [
    "BandwidthLedger", "BandwidthReport", "bandwidth_totals", "to_mbps",
    "Exchanger", "ExchangeResult", "Sensing", "fuse", "run_exchange",
    "Round1Message", "Round2Message", "Round2Request", "WireFormatError",
    "CommScope", "SelectionScope", "StickyRandomSelector", "Strategy",
    "build_selection_scope", "object_utility", "select_comm_scope", "select_random_scope",
    "vehicle_utility", "InProcTransport", "UdpTransport", "make_transport",
]
