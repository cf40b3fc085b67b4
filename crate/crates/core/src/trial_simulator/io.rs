use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{Streams, TimeTagEvent};
use crate::error::{Error, Result};
use crate::quantum_model::{CountsQuad, Station};

/// One CSV row: `station,pulse_index,time_ps,setting,detected`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamRow {
    pub station: String,
    pub pulse_index: u64,
    pub time_ps: u64,
    pub setting: u8,
    pub detected: u8,
}

impl From<&TimeTagEvent> for StreamRow {
    fn from(e: &TimeTagEvent) -> Self {
        Self {
            station: e.station.to_string(),
            pulse_index: e.pulse_index,
            time_ps: e.time_ps,
            setting: e.setting,
            detected: e.detected as u8,
        }
    }
}

impl TryFrom<StreamRow> for TimeTagEvent {
    type Error = Error;

    fn try_from(r: StreamRow) -> Result<Self> {
        let station = match r.station.as_str() {
            "A" => Station::A,
            "B" => Station::B,
            other => return Err(Error::MalformedStream(format!("unknown station `{other}`"))),
        };
        if r.detected > 1 {
            return Err(Error::MalformedStream(format!(
                "detected flag {} is not 0 or 1",
                r.detected
            )));
        }
        Ok(Self {
            station,
            pulse_index: r.pulse_index,
            time_ps: r.time_ps,
            setting: r.setting,
            detected: r.detected == 1,
        })
    }
}

/// Writes both streams merged in time order (A first on ties).
pub fn write_streams<W: Write>(w: W, s: &Streams) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let (mut i, mut j) = (0, 0);
    while i < s.a.len() || j < s.b.len() {
        let take_a = j >= s.b.len() || (i < s.a.len() && s.a[i].time_ps <= s.b[j].time_ps);
        let e = if take_a {
            i += 1;
            &s.a[i - 1]
        } else {
            j += 1;
            &s.b[j - 1]
        };
        out.serialize(StreamRow::from(e))?;
    }
    if s.a.is_empty() && s.b.is_empty() {
        out.write_record(["station", "pulse_index", "time_ps", "setting", "detected"])?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a stream file; row order within each station is preserved.
pub fn read_streams<R: Read>(r: R) -> Result<Streams> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers()?.clone();
    let expected = ["station", "pulse_index", "time_ps", "setting", "detected"];
    if header.iter().map(str::trim).ne(expected) {
        return Err(Error::MalformedStream(format!(
            "expected header {}, got {}",
            expected.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut s = Streams {
        a: Vec::new(),
        b: Vec::new(),
        n_pulses: 0,
        truth: CountsQuad::default(),
    };
    for (line, row) in rdr.deserialize::<StreamRow>().enumerate() {
        let row = row.map_err(|e| Error::Parse {
            line: line + 2,
            reason: e.to_string(),
        })?;
        let e = TimeTagEvent::try_from(row)?;
        s.n_pulses = s.n_pulses.max(e.pulse_index + e.detected as u64);
        match e.station {
            Station::A => s.a.push(e),
            Station::B => s.b.push(e),
        }
    }
    Ok(s)
}
