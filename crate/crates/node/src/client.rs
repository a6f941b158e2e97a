//! Clients for the admin listener and the proxy status endpoint.

use std::io::Read;
use std::net::{TcpStream, ToSocketAddrs};
use std::time::Duration;

use meshguard_core::admin::{AdminCommand, AdminReply};
use meshguard_core::document::parse_json;
use meshguard_core::wire::{read_frame, write_frame};
use meshguard_core::{Document, Manifest, ManifestKind, Tombstone};

use crate::error::{NodeError, Result};

/// One admin connection; commands are answered in order.
pub struct AdminClient {
    stream: TcpStream,
}

impl AdminClient {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        stream.set_read_timeout(Some(Duration::from_secs(10)))?;
        Ok(Self { stream })
    }

    /// Sends a command and returns the raw reply, successful or not.
    pub fn send(&mut self, cmd: &AdminCommand) -> Result<AdminReply> {
        write_frame(&mut self.stream, &cmd.to_document())?;
        let doc =
            read_frame(&mut self.stream)?.ok_or_else(|| NodeError::Admin("connection closed before reply".into()))?;
        Ok(AdminReply::from_document(&doc)?)
    }

    fn expect_version(&mut self, cmd: &AdminCommand) -> Result<u64> {
        let reply = self.send(cmd)?;
        match (reply.ok, reply.version) {
            (true, Some(v)) => Ok(v),
            _ => Err(NodeError::Admin(
                reply.error.unwrap_or_else(|| "no version in reply".into()),
            )),
        }
    }

    pub fn apply(&mut self, manifest: Manifest) -> Result<u64> {
        self.expect_version(&AdminCommand::Apply(manifest))
    }

    pub fn delete(&mut self, kind: ManifestKind, name: &str, tombstone: Option<Tombstone>) -> Result<u64> {
        self.expect_version(&AdminCommand::Delete {
            kind,
            name: name.to_owned(),
            tombstone,
        })
    }

    pub fn status(&mut self) -> Result<Document> {
        let reply = self.send(&AdminCommand::Status)?;
        match reply.status {
            Some(s) if reply.ok => Ok(s),
            _ => Err(NodeError::Admin(
                reply.error.unwrap_or_else(|| "no status in reply".into()),
            )),
        }
    }
}

/// GETs `/state` or `/rejections` from a proxy status endpoint.
pub fn fetch_status(addr: &str, path: &str) -> Result<Document> {
    let url = format!("http://{addr}{path}");
    let response = ureq::get(&url)
        .timeout(Duration::from_secs(5))
        .call()
        .map_err(|e| NodeError::Status(format!("{url}: {e}")))?;
    let mut body = Vec::new();
    response
        .into_reader()
        .take(meshguard_core::wire::MAX_FRAME_LEN as u64)
        .read_to_end(&mut body)?;
    parse_json(&body).map_err(|e| NodeError::Status(format!("{url}: {e}")))
}
