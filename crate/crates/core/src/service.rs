//! PDP query service: newline-delimited JSON over TCP or stdin/stdout.
//!
//! Every connection reads one request per line and answers with one
//! response line, in order. The graph, base configuration and channel
//! parameters form an immutable snapshot shared by all connections;
//! per-request overrides are applied to a private copy.

use std::collections::BTreeMap;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::Arc;
use std::thread;

use serde::{Deserialize, Serialize};

use crate::channel::{compute_pdp, pdp_csv_row, w_to_dbm, ChannelParams, PowerDelayProfile, PDP_CSV_HEADER};
use crate::em;
use crate::geometry::Vec3;
use crate::graph::{Configuration, GraphError, PweGraph};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdpRequest {
    pub tx_id: String,
    pub rx_id: String,
    /// Tile id to function ids; an empty list deactivates the tile.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overrides: Option<BTreeMap<String, Vec<String>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rx_position: Option<Vec3>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PdpStatus {
    Ok,
    UnknownUser,
    InvalidConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdpEntry {
    pub power_dbm: f64,
    pub delay_ns: f64,
    pub arrival: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdpResponse {
    pub status: PdpStatus,
    pub entries: Vec<PdpEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl PdpResponse {
    fn error(status: PdpStatus, message: impl Into<String>) -> Self {
        PdpResponse { status, entries: Vec::new(), message: Some(message.into()) }
    }

    pub fn from_pdp(pdp: &PowerDelayProfile) -> Self {
        let entries = pdp
            .entries
            .iter()
            .map(|e| PdpEntry { power_dbm: w_to_dbm(e.power), delay_ns: e.delay * 1e9, arrival: e.arrival_direction })
            .collect();
        PdpResponse { status: PdpStatus::Ok, entries, message: None }
    }

    /// Entries in the PDP CSV layout.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(PDP_CSV_HEADER);
        s.push('\n');
        for (i, e) in self.entries.iter().enumerate() {
            s.push_str(&pdp_csv_row(i, e.power_dbm, e.delay_ns, e.arrival));
            s.push('\n');
        }
        s
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("response serialises")
    }
}

/// Immutable state every request is answered against.
#[derive(Debug, Clone)]
pub struct PdpService {
    graph: PweGraph,
    config: Configuration,
    params: ChannelParams,
}

impl PdpService {
    pub fn new(graph: PweGraph, config: Configuration, params: ChannelParams) -> Self {
        PdpService { graph, config, params }
    }

    pub fn graph(&self) -> &PweGraph {
        &self.graph
    }

    pub fn configuration(&self) -> &Configuration {
        &self.config
    }

    /// Configuration with the request's overrides applied.
    pub fn configuration_for(&self, overrides: &BTreeMap<String, Vec<String>>) -> Result<Configuration, GraphError> {
        let mut config = self.config.clone();
        for (tile_id, ids) in overrides {
            let t = self
                .graph
                .node(tile_id)
                .filter(|&n| self.graph.is_tile(n))
                .ok_or_else(|| GraphError::UnknownTile(tile_id.clone()))?;
            if ids.is_empty() {
                config.assignment.remove(&t);
                continue;
            }
            let tile = &self.graph.tiles[t];
            let funcs = ids.iter().map(|f| tile.function(f)).collect::<Result<Vec<_>, _>>()?;
            config.assignment.insert(t, em::merge(&funcs)?);
        }
        Ok(config)
    }

    pub fn handle(&self, req: &PdpRequest) -> PdpResponse {
        for id in [&req.tx_id, &req.rx_id] {
            if self.graph.user_node(id).is_err() {
                return PdpResponse::error(PdpStatus::UnknownUser, format!("unknown user `{id}`"));
            }
        }
        let config = match req.overrides.as_ref().map(|o| self.configuration_for(o)) {
            None => None,
            Some(Ok(c)) => Some(c),
            Some(Err(e)) => return PdpResponse::error(PdpStatus::InvalidConfig, e.to_string()),
        };
        let moved;
        let graph = match req.rx_position {
            None => &self.graph,
            Some(p) => match self.graph.with_user_position(&req.rx_id, p) {
                Ok(g) => {
                    moved = g;
                    &moved
                }
                Err(e) => return PdpResponse::error(PdpStatus::InvalidConfig, e.to_string()),
            },
        };
        match compute_pdp(graph, config.as_ref().unwrap_or(&self.config), &req.tx_id, &req.rx_id, &self.params) {
            Ok(pdp) => PdpResponse::from_pdp(&pdp),
            Err(GraphError::UnknownUser(u)) => PdpResponse::error(PdpStatus::UnknownUser, format!("unknown user `{u}`")),
            Err(e) => PdpResponse::error(PdpStatus::InvalidConfig, e.to_string()),
        }
    }

    /// Answer one request line. Lines that do not parse get an
    /// `invalid_config` response naming the problem.
    pub fn respond(&self, line: &str) -> PdpResponse {
        match serde_json::from_str::<PdpRequest>(line) {
            Ok(req) => self.handle(&req),
            Err(e) => PdpResponse::error(PdpStatus::InvalidConfig, format!("malformed request: {e}")),
        }
    }

    /// Serve one byte stream until end of input. Blank lines are skipped.
    pub fn serve_stream<R: BufRead, W: Write>(&self, reader: R, mut writer: W) -> io::Result<()> {
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            writeln!(writer, "{}", self.respond(&line).to_line())?;
            writer.flush()?;
        }
        Ok(())
    }

    pub fn serve_stdio(&self) -> io::Result<()> {
        let stdin = io::stdin();
        let stdout = io::stdout();
        self.serve_stream(stdin.lock(), BufWriter::new(stdout.lock()))
    }

    /// Accept connections forever, one thread each.
    pub fn serve_tcp(self: Arc<Self>, listener: TcpListener) -> io::Result<()> {
        for stream in listener.incoming() {
            let stream = stream?;
            let service = Arc::clone(&self);
            thread::spawn(move || {
                let peer = stream.peer_addr().ok();
                if let Err(e) = service.serve_connection(stream) {
                    log::warn!("connection {peer:?} ended: {e}");
                }
            });
        }
        Ok(())
    }

    fn serve_connection(&self, stream: TcpStream) -> io::Result<()> {
        let reader = BufReader::new(stream.try_clone()?);
        self.serve_stream(reader, BufWriter::new(stream))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_field_names_are_fixed() {
        let req: PdpRequest =
            serde_json::from_str(r#"{"tx_id":"a","rx_id":"b","rx_position":[1,2,3],"overrides":{"t":[]}}"#).unwrap();
        assert_eq!(req.rx_position, Some(Vec3::new(1.0, 2.0, 3.0)));
        assert!(serde_json::from_str::<PdpRequest>(r#"{"tx_id":"a","rx_id":"b","extra":1}"#).is_err());
        let resp = PdpResponse {
            status: PdpStatus::UnknownUser,
            entries: vec![PdpEntry { power_dbm: -60.0, delay_ns: 10.0, arrival: Vec3::new(0.0, 0.0, 1.0) }],
            message: None,
        };
        assert_eq!(
            resp.to_line(),
            r#"{"status":"unknown_user","entries":[{"power_dbm":-60.0,"delay_ns":10.0,"arrival":[0.0,0.0,1.0]}]}"#
        );
    }
}
