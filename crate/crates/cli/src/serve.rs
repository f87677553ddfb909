//! WebSocket front end for [`Session`].
//!
//! The connection thread only moves text: inbound frames go to the
//! simulation thread over a channel in arrival order, and immutable
//! serialized snapshots come back over another.

use std::io::ErrorKind;
use std::net::{TcpListener, TcpStream};
use std::sync::mpsc::{self, Receiver, Sender, TryRecvError};
use std::thread;
use std::time::{Duration, Instant};

use log::{info, warn};
use tungstenite::{Message, WebSocket};

use isot_core::harness::{Scenario, Session, STATE_HZ};

/// Most control ticks run per state frame when the simulation falls behind
/// wall-clock time.
const MAX_TICKS_PER_FRAME: u64 = 200;

pub fn serve(scenario: &Scenario, seed: u64, port: u16) -> isot_core::Result<()> {
    let listener = TcpListener::bind(("127.0.0.1", port))?;
    let addr = listener.local_addr()?;
    let mut session = Session::new(scenario, seed)?;
    println!("listening on ws://{addr}");
    info!("serving {} on {addr}", scenario.name);
    for stream in listener.incoming() {
        let stream = match stream {
            Ok(s) => s,
            Err(e) => {
                warn!("accept failed: {e}");
                continue;
            }
        };
        let peer = stream.peer_addr().ok();
        info!("session start {peer:?}");
        session.reset()?;
        session = run_connection(stream, session)?;
        info!("session end {peer:?}");
    }
    Ok(())
}

fn run_connection(stream: TcpStream, session: Session) -> isot_core::Result<Session> {
    stream.set_nodelay(true)?;
    let mut ws = match tungstenite::accept(stream) {
        Ok(ws) => ws,
        Err(e) => {
            warn!("handshake failed: {e}");
            return Ok(session);
        }
    };
    ws.get_mut().set_read_timeout(Some(Duration::from_millis(2)))?;
    let (cmd_tx, cmd_rx) = mpsc::channel::<String>();
    let (out_tx, out_rx) = mpsc::channel::<String>();
    let sim = thread::spawn(move || simulate(session, cmd_rx, out_tx));
    pump(&mut ws, cmd_tx, out_rx);
    sim.join()
        .map_err(|_| isot_core::Error::InvalidInput("simulation thread panicked".into()))
}

/// Socket I/O until the client leaves. Dropping `cmd` stops the simulation.
fn pump(ws: &mut WebSocket<TcpStream>, cmd: Sender<String>, out: Receiver<String>) {
    loop {
        match ws.read() {
            Ok(Message::Text(t)) => {
                if cmd.send(t.to_string()).is_err() {
                    return;
                }
            }
            Ok(Message::Binary(_)) => {
                let _ = cmd.send(String::from("<binary>"));
            }
            Ok(Message::Close(_)) => {
                let _ = ws.flush();
                return;
            }
            Ok(_) => {}
            Err(tungstenite::Error::Io(e)) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            Err(e) => {
                info!("connection closed: {e}");
                return;
            }
        }
        loop {
            match out.try_recv() {
                Ok(frame) => {
                    if let Err(e) = ws.send(Message::text(frame)) {
                        info!("send failed: {e}");
                        return;
                    }
                }
                Err(TryRecvError::Empty) => break,
                Err(TryRecvError::Disconnected) => return,
            }
        }
    }
}

/// Advances the session in step with wall-clock time and emits state frames
/// at [`STATE_HZ`].
fn simulate(mut session: Session, cmd: Receiver<String>, out: Sender<String>) -> Session {
    let period = Duration::from_secs_f64(1.0 / STATE_HZ);
    let control_hz = session.scenario().rates.control_hz as f64;
    let start = Instant::now();
    let mut ticks_done = 0u64;
    let mut next = start;
    loop {
        loop {
            match cmd.try_recv() {
                Ok(text) => {
                    if let Some(reject) = session.handle_text(&text) {
                        if out.send(reject.to_json()).is_err() {
                            return session;
                        }
                    }
                }
                Err(TryRecvError::Empty) => break,
                Err(TryRecvError::Disconnected) => return session,
            }
        }
        let due = (start.elapsed().as_secs_f64() * control_hz) as u64;
        let ticks = due.saturating_sub(ticks_done).min(MAX_TICKS_PER_FRAME);
        ticks_done = ticks_done.max(due.saturating_sub(MAX_TICKS_PER_FRAME)) + ticks;
        if let Some(err) = session.advance(ticks) {
            if out.send(err.to_json()).is_err() {
                return session;
            }
        }
        match session.state_frame() {
            Ok(frame) => {
                if out.send(frame.to_json()).is_err() {
                    return session;
                }
            }
            Err(e) => warn!("state frame: {e}"),
        }
        next += period;
        let now = Instant::now();
        if next > now {
            thread::sleep(next - now);
        } else {
            next = now;
        }
    }
}
