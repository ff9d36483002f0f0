use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use log::debug;

use super::conn::Connection;
use super::implicit_tls;
use crate::transport::{Endpoint, TransportError};

pub(crate) struct Reply {
    pub code: u16,
    pub lines: Vec<String>,
}

impl Reply {
    fn text(&self) -> String {
        self.lines.join(" / ")
    }
}

pub(crate) struct SmtpClient {
    conn: Connection,
    extensions: Vec<String>,
}

/// Doubles a leading dot on every line and terminates the data section.
pub(crate) fn dot_stuff(wire: &str) -> String {
    let mut out = String::with_capacity(wire.len() + 8);
    for line in wire.split_inclusive("\r\n") {
        if line.starts_with('.') {
            out.push('.');
        }
        out.push_str(line);
    }
    if !out.is_empty() && !out.ends_with("\r\n") {
        out.push_str("\r\n");
    }
    out.push_str(".\r\n");
    out
}

impl SmtpClient {
    pub(crate) fn connect(
        endpoint: &Endpoint,
        use_tls: bool,
        username: &str,
        password: &str,
    ) -> Result<Self, TransportError> {
        let mut conn = Connection::open(endpoint)?;
        let implicit = use_tls && implicit_tls(endpoint.port);
        if implicit {
            conn.upgrade()?;
        }
        let mut client = Self {
            conn,
            extensions: Vec::new(),
        };
        let greeting = client.read_reply()?;
        if greeting.code != 220 {
            return Err(TransportError::ConnectFailed(format!(
                "SMTP greeting {}: {}",
                greeting.code,
                greeting.text()
            )));
        }
        client.hello()?;
        if use_tls && !implicit {
            if !client.has_extension("STARTTLS") {
                return Err(TransportError::TlsUnavailable);
            }
            let reply = client.command("STARTTLS")?;
            if reply.code != 220 {
                return Err(TransportError::TlsUnavailable);
            }
            client.conn.upgrade()?;
            client.hello()?;
        }
        if client.extensions.iter().any(|e| e.starts_with("AUTH")) {
            let token = STANDARD.encode(format!("\0{username}\0{password}"));
            let reply = client.command(&format!("AUTH PLAIN {token}"))?;
            match reply.code {
                235 => {}
                535 | 534 | 530 => return Err(TransportError::AuthFailed),
                code => {
                    return Err(TransportError::Protocol(format!(
                        "AUTH PLAIN answered {code}: {}",
                        reply.text()
                    )))
                }
            }
        }
        Ok(client)
    }

    fn has_extension(&self, name: &str) -> bool {
        self.extensions
            .iter()
            .any(|e| e.split_whitespace().next() == Some(name))
    }

    fn hello(&mut self) -> Result<(), TransportError> {
        let reply = self.command("EHLO localhost")?;
        if reply.code == 250 {
            self.extensions = reply
                .lines
                .iter()
                .skip(1)
                .map(|l| l.to_ascii_uppercase())
                .collect();
            return Ok(());
        }
        let reply = self.command("HELO localhost")?;
        if reply.code != 250 {
            return Err(TransportError::Protocol(format!(
                "HELO refused: {}",
                reply.text()
            )));
        }
        self.extensions.clear();
        Ok(())
    }

    fn read_reply(&mut self) -> Result<Reply, TransportError> {
        let mut lines = Vec::new();
        loop {
            let line = self.conn.read_line()?;
            if line.len() < 3 {
                return Err(TransportError::Protocol(format!(
                    "short SMTP reply {line:?}"
                )));
            }
            let code: u16 = line[..3]
                .parse()
                .map_err(|_| TransportError::Protocol(format!("bad SMTP reply {line:?}")))?;
            let more = line.as_bytes().get(3) == Some(&b'-');
            lines.push(line.get(4..).unwrap_or("").to_owned());
            if !more {
                debug!(
                    "smtp <- {code} {}",
                    lines.last().map(String::as_str).unwrap_or("")
                );
                return Ok(Reply { code, lines });
            }
        }
    }

    fn command(&mut self, line: &str) -> Result<Reply, TransportError> {
        if line.starts_with("AUTH") {
            debug!("smtp -> AUTH ...");
        } else {
            debug!("smtp -> {line}");
        }
        self.conn.write_all(format!("{line}\r\n").as_bytes())?;
        self.read_reply()
    }

    fn expect(
        &mut self,
        line: &str,
        ok: &[u16],
        payload: u64,
        limit: u64,
    ) -> Result<(), TransportError> {
        let reply = self.command(line)?;
        check(&reply, ok, payload, limit)
    }

    /// One envelope from and to `address`.
    pub(crate) fn send(
        &mut self,
        address: &str,
        wire: &str,
        payload: u64,
        limit: u64,
    ) -> Result<(), TransportError> {
        self.expect(&format!("MAIL FROM:<{address}>"), &[250], payload, limit)?;
        self.expect(&format!("RCPT TO:<{address}>"), &[250, 251], payload, limit)?;
        self.expect("DATA", &[354], payload, limit)?;
        self.conn.write_all(dot_stuff(wire).as_bytes())?;
        let reply = self.read_reply()?;
        check(&reply, &[250], payload, limit)
    }

    pub(crate) fn quit(&mut self) -> Result<(), TransportError> {
        self.command("QUIT").map(|_| ())
    }

    pub(crate) fn is_tls(&self) -> bool {
        self.conn.is_tls()
    }
}

fn check(reply: &Reply, ok: &[u16], payload: u64, limit: u64) -> Result<(), TransportError> {
    if ok.contains(&reply.code) {
        return Ok(());
    }
    match reply.code {
        552 | 523 => Err(TransportError::MessageTooLarge { payload, limit }),
        554 if reply.text().to_ascii_lowercase().contains("size") => {
            Err(TransportError::MessageTooLarge { payload, limit })
        }
        code => Err(TransportError::Protocol(format!(
            "SMTP {code}: {}",
            reply.text()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_stuffing() {
        assert_eq!(dot_stuff("a\r\n.b\r\n"), "a\r\n..b\r\n.\r\n");
        assert_eq!(dot_stuff("x"), "x\r\n.\r\n");
        assert_eq!(dot_stuff(""), ".\r\n");
    }
}
