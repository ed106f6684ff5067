//! Server-sent execution events.
//!
//! `GET /v1/sessions/{id}/events` first replays the logged events after the
//! client's `Last-Event-ID` (all of them when absent), then forwards live
//! ones until the session reaches `done` or `failed`. Each execution event
//! carries its log index as the SSE id, so a reconnecting client resumes
//! without gaps or duplicates. Phase changes arrive as `phase` events
//! without an id. With `?run=1` the server also drives the remaining
//! subtasks itself.

use std::convert::Infallible;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use covillm_core::executor::{EventKind, ExecutionEvent};
use futures::channel::mpsc;
use futures::{Stream, StreamExt};
use serde::Deserialize;
use serde_json::json;
use tokio::sync::broadcast::error::RecvError;

use crate::app::{AppState, Handle, Notice};
use crate::error::ApiError;
use crate::session::Phase;

#[derive(Debug, Default, Deserialize)]
pub(crate) struct EventsQuery {
    #[serde(default)]
    run: Option<u8>,
}

fn execution_event(index: usize, ev: &ExecutionEvent) -> Event {
    let name = match ev.kind {
        EventKind::Move { .. } => "move",
        EventKind::Pick { .. } => "pick",
        EventKind::Place { .. } => "place",
        EventKind::Error { .. } => "error",
    };
    let data = json!({ "index": index, "event": ev });
    Event::default()
        .id(index.to_string())
        .event(name)
        .data(data.to_string())
}

fn phase_event(phase: Phase) -> Event {
    Event::default()
        .event("phase")
        .data(json!({ "phase": phase }).to_string())
}

fn last_event_id(headers: &HeaderMap) -> Option<usize> {
    headers
        .get("last-event-id")?
        .to_str()
        .ok()?
        .trim()
        .parse()
        .ok()
}

pub(crate) async fn stream(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(query): Query<EventsQuery>,
    headers: HeaderMap,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    let handle = state.handle(&id).await?;
    let start = last_event_id(&headers).map_or(0, |i| i + 1);
    let run = query.run.unwrap_or(0) != 0;

    // Subscribe while holding the session lock: every notice sent after the
    // replay snapshot below reaches this receiver.
    let (replay, phase, mut notices) = {
        let session = handle.session.lock().await;
        if run
            && !matches!(
                session.phase,
                Phase::Planned | Phase::Executing | Phase::Done | Phase::Failed
            )
        {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                "phase_conflict",
                format!("cannot run in phase {}", session.phase),
            ));
        }
        let replay: Vec<(usize, ExecutionEvent)> = session
            .events
            .iter()
            .cloned()
            .enumerate()
            .skip(start)
            .collect();
        (replay, session.phase, handle.notices.subscribe())
    };

    let (tx, rx) = mpsc::unbounded::<Event>();
    if run && !phase.is_terminal() {
        tokio::spawn(drive(state.clone(), handle.clone()));
    }
    tokio::spawn(async move {
        let send = |ev: Event| tx.unbounded_send(ev).is_ok();
        let mut next = start;
        if !send(phase_event(phase)) {
            return;
        }
        for (index, ev) in &replay {
            if !send(execution_event(*index, ev)) {
                return;
            }
            next = index + 1;
        }
        if phase.is_terminal() {
            return;
        }
        loop {
            match notices.recv().await {
                Ok(Notice::Event { index, event }) => {
                    if index >= next {
                        if !send(execution_event(index, &event)) {
                            return;
                        }
                        next = index + 1;
                    }
                }
                Ok(Notice::Phase(p)) => {
                    if !send(phase_event(p)) || p.is_terminal() {
                        return;
                    }
                }
                Err(RecvError::Lagged(_)) => {
                    // Fall back to the log for whatever was skipped.
                    let session = handle.session.lock().await;
                    for (index, ev) in session.events.iter().enumerate().skip(next) {
                        if !send(execution_event(index, ev)) {
                            return;
                        }
                    }
                    next = session.events.len();
                    if session.phase.is_terminal() {
                        send(phase_event(session.phase));
                        return;
                    }
                }
                Err(RecvError::Closed) => return,
            }
        }
    });
    Ok(Sse::new(rx.map(Ok)).keep_alive(KeepAlive::default()))
}

/// Steps until the plan completes or a step fails.
async fn drive(state: AppState, handle: Arc<Handle>) {
    loop {
        match state.step(&handle).await {
            Ok(outcome) if !outcome.phase.is_terminal() => continue,
            Ok(_) => return,
            Err(e) => {
                log::debug!("run stopped: {}", e.message);
                return;
            }
        }
    }
}
