//! Field-log ingestion: NMEA GPS sentences, the packet CSV, and replay.

pub mod nmea;
pub mod packets;
pub mod replay;

pub use nmea::{parse_nmea_sentence, parse_nmea_text, to_gga, to_rmc, GpsFix, NmeaError, SentenceKind};
pub use packets::{
    parse_packet_log, write_packet_log, PacketLogError, PacketRecord, ParseMode, ParsedPacketLog, RowError,
    PACKET_LOG_HEADER,
};
pub use replay::{read_units, replay, units_of, write_units, ReplayError, UnitRecord};
