use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::Arc;

use crate::protocol::{ServerContext, Session};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Transport {
    Stdio,
    Tcp(u16),
}

impl std::str::FromStr for Transport {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            None if s == "stdio" => Ok(Self::Stdio),
            Some(("tcp", port)) => port.parse().map(Self::Tcp).map_err(|_| format!("bad port in {s:?}")),
            _ => Err(format!("transport must be stdio or tcp:PORT, got {s:?}")),
        }
    }
}

/// Serves one session until `close` or end of input. Blank lines are
/// ignored.
pub fn serve_session<R: BufRead, W: Write>(ctx: &ServerContext, input: R, mut output: W) -> std::io::Result<()> {
    let mut session = Session::new(ctx);
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = session.handle_line(&line);
        output.write_all(reply.as_bytes())?;
        output.write_all(b"\n")?;
        output.flush()?;
        if session.is_closed() {
            break;
        }
    }
    Ok(())
}

pub fn serve_stdio(ctx: &ServerContext) -> std::io::Result<()> {
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    serve_session(ctx, stdin.lock(), stdout.lock())
}

fn serve_stream(ctx: &ServerContext, stream: TcpStream) -> std::io::Result<()> {
    stream.set_nodelay(true)?;
    let reader = BufReader::new(stream.try_clone()?);
    serve_session(ctx, reader, stream)
}

/// Accepts connections forever; each one gets its own thread and
/// environment.
pub fn serve_tcp(ctx: Arc<ServerContext>, listener: TcpListener) -> std::io::Result<()> {
    for stream in listener.incoming() {
        let stream = stream?;
        let ctx = Arc::clone(&ctx);
        std::thread::spawn(move || {
            let peer = stream.peer_addr().ok();
            if let Err(e) = serve_stream(&ctx, stream) {
                eprintln!("session {peer:?} ended: {e}");
            }
        });
    }
    Ok(())
}
