//! Length-prefixed JSON over TCP: a big-endian u32 byte count, then the
//! message. One thread per connection; a connection may carry many requests.

use std::io::{self, BufReader, BufWriter, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::{Arc, Mutex};
use std::thread;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::wire::{Request, Response};
use super::{DirectoryError, DirectoryStore, Transport};

const MAX_FRAME: u32 = 256 << 20;

fn write_frame<W: Write, T: Serialize>(w: &mut W, msg: &T) -> io::Result<()> {
    let bytes = serde_json::to_vec(msg)?;
    let len = u32::try_from(bytes.len())
        .ok()
        .filter(|&n| n <= MAX_FRAME)
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, "frame too large"))?;
    w.write_all(&len.to_be_bytes())?;
    w.write_all(&bytes)?;
    w.flush()
}

/// `Ok(None)` on a clean close between frames.
fn read_frame<R: Read, T: DeserializeOwned>(r: &mut R) -> io::Result<Option<T>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let len = u32::from_be_bytes(len);
    if len > MAX_FRAME {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "frame too large"));
    }
    let mut buf = vec![0u8; len as usize];
    r.read_exact(&mut buf)?;
    Ok(Some(serde_json::from_slice(&buf)?))
}

fn handle_connection(store: &DirectoryStore, stream: TcpStream) -> io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream);
    while let Some(req) = read_frame::<_, Request>(&mut reader)? {
        write_frame(&mut writer, &store.handle(&req))?;
    }
    Ok(())
}

/// Serves forever on `listener`.
pub fn serve(store: Arc<DirectoryStore>, listener: TcpListener) -> io::Result<()> {
    for stream in listener.incoming() {
        let stream = stream?;
        let store = store.clone();
        thread::spawn(move || {
            let _ = handle_connection(&store, stream);
        });
    }
    Ok(())
}

/// Binds `addr` (port 0 picks a free port) and serves on a background
/// thread. Returns the bound address.
pub fn spawn_server(store: Arc<DirectoryStore>, addr: impl ToSocketAddrs) -> io::Result<SocketAddr> {
    let listener = TcpListener::bind(addr)?;
    let local = listener.local_addr()?;
    thread::spawn(move || serve(store, listener));
    Ok(local)
}

/// Client side; keeps one connection open and reconnects after a failure.
pub struct TcpTransport {
    addr: SocketAddr,
    conn: Mutex<Option<(BufReader<TcpStream>, BufWriter<TcpStream>)>>,
}

impl TcpTransport {
    pub fn new(addr: impl ToSocketAddrs) -> io::Result<Self> {
        let addr = addr
            .to_socket_addrs()?
            .next()
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "no address"))?;
        Ok(Self { addr, conn: Mutex::new(None) })
    }

    fn exchange(&self, req: &Request) -> io::Result<Response> {
        let mut guard = self.conn.lock().unwrap();
        if guard.is_none() {
            let stream = TcpStream::connect(self.addr)?;
            stream.set_nodelay(true)?;
            *guard = Some((BufReader::new(stream.try_clone()?), BufWriter::new(stream)));
        }
        let (reader, writer) = guard.as_mut().expect("connected above");
        let result = write_frame(writer, req).and_then(|_| {
            read_frame::<_, Response>(reader)?
                .ok_or_else(|| io::Error::new(io::ErrorKind::UnexpectedEof, "server closed connection"))
        });
        if result.is_err() {
            *guard = None;
        }
        result
    }
}

impl Transport for TcpTransport {
    fn call(&self, req: &Request) -> Result<Response, DirectoryError> {
        self.exchange(req).map_err(|e| DirectoryError::Transport(e.to_string()))
    }
}
