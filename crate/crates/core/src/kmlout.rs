//! Four-colour packet-fate classification and KML 2.2 rendering.
//!
//! A broadcast is white when no receiver decoded it, yellow when only the
//! RSU did, blue when only the OBU did and green when both did. RSU and OBU
//! locations are drawn as yellow and blue pushpins; packet points use small
//! dots in the same colours so the two stay distinguishable.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::GeoPoint;

#[derive(Debug, Error)]
pub enum KmlError {
    #[error("nothing to render")]
    Empty,
    #[error("unclassified receiver role: {0}")]
    UnclassifiedReceiver(String),
    #[error("decimation factor must be at least 1")]
    Decimation,
    #[error("kmz: {0}")]
    Io(#[from] std::io::Error),
    #[error("kmz: {0}")]
    Zip(#[from] zip::result::ZipError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PacketClass {
    White,
    Yellow,
    Blue,
    Green,
}

impl PacketClass {
    pub const ALL: [PacketClass; 4] = [PacketClass::White, PacketClass::Yellow, PacketClass::Blue, PacketClass::Green];

    /// KML `aabbggrr` colour.
    pub fn kml_color(self) -> &'static str {
        match self {
            PacketClass::White => "ffffffff",
            PacketClass::Yellow => "ff00ffff",
            PacketClass::Blue => "ffff0000",
            PacketClass::Green => "ff00ff00",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PacketClass::White => "white",
            PacketClass::Yellow => "yellow",
            PacketClass::Blue => "blue",
            PacketClass::Green => "green",
        }
    }

    fn folder_title(self) -> &'static str {
        match self {
            PacketClass::White => "Received by neither",
            PacketClass::Yellow => "Received by RSU only",
            PacketClass::Blue => "Received by OBU only",
            PacketClass::Green => "Received by RSU and OBU",
        }
    }
}

pub fn classify(rsu_received: bool, obu_received: bool) -> PacketClass {
    match (rsu_received, obu_received) {
        (false, false) => PacketClass::White,
        (true, false) => PacketClass::Yellow,
        (false, true) => PacketClass::Blue,
        (true, true) => PacketClass::Green,
    }
}

/// Reduces any number of receivers to the RSU/OBU pair: a role counts as
/// received when any unit in it decoded the packet.
pub fn classify_multi<'a, I, S>(receptions: I, rsu_ids: &[S], obu_ids: &[S]) -> Result<PacketClass, KmlError>
where
    I: IntoIterator<Item = (&'a str, bool)>,
    S: AsRef<str>,
{
    let mut rsu = false;
    let mut obu = false;
    for (id, got) in receptions {
        if rsu_ids.iter().any(|r| r.as_ref() == id) {
            rsu |= got;
        } else if obu_ids.iter().any(|o| o.as_ref() == id) {
            obu |= got;
        } else {
            return Err(KmlError::UnclassifiedReceiver(id.to_string()));
        }
    }
    Ok(classify(rsu, obu))
}

/// A packet ready to draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifiedFate {
    pub seq: u64,
    pub tx_time_ms: u64,
    pub position: GeoPoint,
    pub class: PacketClass,
}

/// A fixed unit drawn as a pushpin.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitMarker {
    pub id: String,
    pub position: GeoPoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KmlOptions {
    pub title: String,
    /// Keep every n-th packet.
    pub decimation: usize,
}

impl Default for KmlOptions {
    fn default() -> Self {
        KmlOptions { title: "Warning packet fates".to_string(), decimation: 1 }
    }
}

const DOT_ICON: &str = "http://maps.google.com/mapfiles/kml/shapes/shaded_dot.png";
const RSU_ICON: &str = "http://maps.google.com/mapfiles/kml/pushpin/ylw-pushpin.png";
const OBU_ICON: &str = "http://maps.google.com/mapfiles/kml/pushpin/blue-pushpin.png";

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

fn coordinates(p: &GeoPoint) -> String {
    // round first so values that print as zero never carry a minus sign
    let fix = |v: f64, scale: f64| (v * scale).round() / scale + 0.0;
    format!("{:.7},{:.7},{:.1}", fix(p.lon(), 1e7), fix(p.lat(), 1e7), fix(p.alt(), 10.0))
}

/// Renders the trace as a KML 2.2 document. Output is byte-for-byte
/// deterministic for identical input.
pub fn emit_kml(
    fates: &[ClassifiedFate],
    rsus: &[UnitMarker],
    obus: &[UnitMarker],
    options: &KmlOptions,
) -> Result<String, KmlError> {
    if options.decimation == 0 {
        return Err(KmlError::Decimation);
    }
    if fates.is_empty() && rsus.is_empty() && obus.is_empty() {
        return Err(KmlError::Empty);
    }
    let mut by_class: BTreeMap<PacketClass, Vec<&ClassifiedFate>> = BTreeMap::new();
    for f in fates.iter().step_by(options.decimation) {
        by_class.entry(f.class).or_default().push(f);
    }

    let mut doc = String::new();
    doc.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    doc.push_str("<kml xmlns=\"http://www.opengis.net/kml/2.2\">\n<Document>\n");
    let _ = writeln!(doc, "<name>{}</name>", escape(&options.title));
    for class in PacketClass::ALL {
        let _ = writeln!(
            doc,
            "<Style id=\"pkt-{name}\"><IconStyle><color>{color}</color><scale>0.4</scale>\
             <Icon><href>{DOT_ICON}</href></Icon></IconStyle><LabelStyle><scale>0</scale></LabelStyle></Style>",
            name = class.name(),
            color = class.kml_color(),
        );
    }
    for (id, color, icon) in [
        ("unit-rsu", PacketClass::Yellow.kml_color(), RSU_ICON),
        ("unit-obu", PacketClass::Blue.kml_color(), OBU_ICON),
    ] {
        let _ = writeln!(
            doc,
            "<Style id=\"{id}\"><IconStyle><color>{color}</color><scale>1.2</scale>\
             <Icon><href>{icon}</href></Icon></IconStyle></Style>"
        );
    }

    for class in PacketClass::ALL {
        let Some(list) = by_class.get(&class) else { continue };
        let _ = writeln!(doc, "<Folder><name>{}</name>", class.folder_title());
        for f in list {
            let _ = writeln!(
                doc,
                "<Placemark><name>{seq}</name><description>seq {seq}, t = {t} ms</description>\
                 <styleUrl>#pkt-{class}</styleUrl><Point><coordinates>{coords}</coordinates></Point></Placemark>",
                seq = f.seq,
                t = f.tx_time_ms,
                class = class.name(),
                coords = coordinates(&f.position),
            );
        }
        doc.push_str("</Folder>\n");
    }

    if !rsus.is_empty() || !obus.is_empty() {
        doc.push_str("<Folder><name>Units</name>\n");
        for (units, style, role) in [(rsus, "unit-rsu", "RSU"), (obus, "unit-obu", "OBU")] {
            for u in units {
                let _ = writeln!(
                    doc,
                    "<Placemark><name>{id}</name><description>{role}</description>\
                     <styleUrl>#{style}</styleUrl><Point><coordinates>{coords}</coordinates></Point></Placemark>",
                    id = escape(&u.id),
                    coords = coordinates(&u.position),
                );
            }
        }
        doc.push_str("</Folder>\n");
    }
    doc.push_str("</Document>\n</kml>\n");
    Ok(doc)
}

/// Writes `kml` as a KMZ archive with a single `doc.kml` entry.
pub fn write_kmz(kml: &str, path: &Path) -> Result<(), KmlError> {
    let file = std::fs::File::create(path)?;
    let mut zip = zip::ZipWriter::new(file);
    let opts = zip::write::SimpleFileOptions::default()
        .compression_method(zip::CompressionMethod::Deflated)
        .last_modified_time(zip::DateTime::default());
    zip.start_file("doc.kml", opts)?;
    zip.write_all(kml.as_bytes())?;
    zip.finish()?;
    Ok(())
}
