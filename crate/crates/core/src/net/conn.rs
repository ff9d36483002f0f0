use std::io::{self, BufRead, BufReader, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::sync::Arc;
use std::time::Duration;

use rustls::pki_types::ServerName;
use rustls::{ClientConfig, ClientConnection, RootCertStore, StreamOwned};

use crate::transport::{Endpoint, TransportError};

const IO_TIMEOUT: Duration = Duration::from_secs(60);

enum Stream {
    Plain(TcpStream),
    Tls(Box<StreamOwned<ClientConnection, TcpStream>>),
}

impl Read for Stream {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        match self {
            Stream::Plain(s) => s.read(buf),
            Stream::Tls(s) => s.read(buf),
        }
    }
}

impl Write for Stream {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        match self {
            Stream::Plain(s) => s.write(buf),
            Stream::Tls(s) => s.write(buf),
        }
    }

    fn flush(&mut self) -> io::Result<()> {
        match self {
            Stream::Plain(s) => s.flush(),
            Stream::Tls(s) => s.flush(),
        }
    }
}

fn tls_config() -> Arc<ClientConfig> {
    let roots = RootCertStore {
        roots: webpki_roots::TLS_SERVER_ROOTS.to_vec(),
    };
    let config =
        ClientConfig::builder_with_provider(Arc::new(rustls::crypto::ring::default_provider()))
            .with_safe_default_protocol_versions()
            .expect("ring supports the default protocol versions")
            .with_root_certificates(roots)
            .with_no_client_auth();
    Arc::new(config)
}

/// Line-oriented client connection that can be upgraded to TLS.
pub(crate) struct Connection {
    host: String,
    reader: Option<BufReader<Stream>>,
}

impl Connection {
    pub(crate) fn open(endpoint: &Endpoint) -> Result<Self, TransportError> {
        let addrs = (endpoint.host.as_str(), endpoint.port)
            .to_socket_addrs()
            .map_err(|e| TransportError::ConnectFailed(format!("{endpoint}: {e}")))?;
        let mut last = None;
        for addr in addrs {
            match TcpStream::connect_timeout(&addr, IO_TIMEOUT) {
                Ok(tcp) => {
                    tcp.set_read_timeout(Some(IO_TIMEOUT))?;
                    tcp.set_write_timeout(Some(IO_TIMEOUT))?;
                    // commands and replies are small and strictly alternating
                    tcp.set_nodelay(true)?;
                    return Ok(Self {
                        host: endpoint.host.clone(),
                        reader: Some(BufReader::new(Stream::Plain(tcp))),
                    });
                }
                Err(e) => last = Some(e),
            }
        }
        Err(TransportError::ConnectFailed(format!(
            "{endpoint}: {}",
            last.map_or_else(|| "no addresses".to_owned(), |e| e.to_string())
        )))
    }

    fn reader(&mut self) -> &mut BufReader<Stream> {
        self.reader.as_mut().expect("connection in use")
    }

    pub(crate) fn is_tls(&self) -> bool {
        matches!(
            self.reader.as_ref().map(BufReader::get_ref),
            Some(Stream::Tls(_))
        )
    }

    /// Wraps the socket in TLS. Any bytes already buffered would have been
    /// sent in the clear, so they are treated as a protocol violation.
    pub(crate) fn upgrade(&mut self) -> Result<(), TransportError> {
        let reader = self.reader.take().expect("connection in use");
        if !reader.buffer().is_empty() {
            return Err(TransportError::Protocol(
                "server sent data before the TLS handshake".into(),
            ));
        }
        let tcp = match reader.into_inner() {
            Stream::Plain(tcp) => tcp,
            Stream::Tls(_) => return Err(TransportError::Protocol("already using TLS".into())),
        };
        let name = ServerName::try_from(self.host.clone())
            .map_err(|e| TransportError::ConnectFailed(format!("bad server name: {e}")))?;
        let conn = ClientConnection::new(tls_config(), name)
            .map_err(|e| TransportError::ConnectFailed(e.to_string()))?;
        let mut stream = StreamOwned::new(conn, tcp);
        while stream.conn.is_handshaking() {
            stream
                .conn
                .complete_io(&mut stream.sock)
                .map_err(|e| TransportError::ConnectFailed(format!("TLS handshake: {e}")))?;
        }
        self.reader = Some(BufReader::new(Stream::Tls(Box::new(stream))));
        Ok(())
    }

    /// Next line without its CRLF.
    pub(crate) fn read_line(&mut self) -> Result<String, TransportError> {
        let mut buf = Vec::new();
        let n = self.reader().read_until(b'\n', &mut buf)?;
        if n == 0 {
            return Err(TransportError::Io("connection closed by server".into()));
        }
        while matches!(buf.last(), Some(b'\n' | b'\r')) {
            buf.pop();
        }
        String::from_utf8(buf).map_err(|_| TransportError::Protocol("non-UTF-8 response".into()))
    }

    pub(crate) fn read_exact(&mut self, n: usize) -> Result<Vec<u8>, TransportError> {
        let mut buf = vec![0; n];
        self.reader().read_exact(&mut buf)?;
        Ok(buf)
    }

    pub(crate) fn write_all(&mut self, data: &[u8]) -> Result<(), TransportError> {
        let stream = self.reader().get_mut();
        stream.write_all(data)?;
        stream.flush()?;
        Ok(())
    }
}
