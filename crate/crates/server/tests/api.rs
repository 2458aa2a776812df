use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use branchtalk::{replay, Choice, Project, SessionOptions, StateEdit, StateTarget, TimedEdit};
use branchtalk_server::{Created, Delta, EntryView, ErrorBody, ProjectView, ServerConfig, Snapshot};
use futures::StreamExt;
use reqwest::{Client, StatusCode};
use serde_json::json;
use tokio::sync::oneshot;

fn fixture(name: &str) -> Arc<Project> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name);
    Arc::new(branchtalk::xml::load(&path).unwrap())
}

struct Server {
    base: String,
    client: Client,
    _stop: oneshot::Sender<()>,
}

impl Server {
    async fn start(project: Arc<Project>) -> Self {
        let (listener, addr) = branchtalk_server::bind_localhost(0).await.unwrap();
        let (stop, stopped) = oneshot::channel::<()>();
        tokio::spawn(branchtalk_server::serve(listener, project, ServerConfig::default(), async {
            let _ = stopped.await;
        }));
        Server {
            base: format!("http://{addr}"),
            client: Client::new(),
            _stop: stop,
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    async fn create(&self, start: &str) -> Created {
        let res = self
            .client
            .post(self.url("/sessions"))
            .json(&json!({ "startName": start }))
            .send()
            .await
            .unwrap();
        assert_eq!(res.status(), StatusCode::OK);
        res.json().await.unwrap()
    }

    async fn post(&self, path: &str, body: serde_json::Value) -> reqwest::Response {
        self.client.post(self.url(path)).json(&body).send().await.unwrap()
    }

    async fn choose(&self, id: &str, node: &str) -> reqwest::Response {
        self.post(&format!("/sessions/{id}/choose"), json!({ "nodeId": node })).await
    }

    async fn snapshot(&self, id: &str) -> Snapshot {
        self.client
            .get(self.url(&format!("/sessions/{id}")))
            .send()
            .await
            .unwrap()
            .json()
            .await
            .unwrap()
    }
}

/// Minimal SSE reader: yields `(event, id, data)` per message.
struct Events {
    stream: futures::stream::BoxStream<'static, reqwest::Result<bytes::Bytes>>,
    buffer: String,
}

impl Events {
    async fn open(server: &Server, id: &str) -> Self {
        let res = server
            .client
            .get(server.url(&format!("/sessions/{id}/events")))
            .send()
            .await
            .unwrap();
        assert_eq!(res.status(), StatusCode::OK);
        assert!(res.headers()["content-type"].to_str().unwrap().starts_with("text/event-stream"));
        Events {
            stream: res.bytes_stream().boxed(),
            buffer: String::new(),
        }
    }

    async fn next_message(&mut self) -> Option<(String, String, String)> {
        loop {
            if let Some(end) = self.buffer.find("\n\n") {
                let block: String = self.buffer.drain(..end + 2).collect();
                let (mut event, mut id, mut data) = (String::new(), String::new(), String::new());
                for line in block.lines() {
                    if let Some(v) = line.strip_prefix("event:") {
                        event = v.trim().to_owned();
                    } else if let Some(v) = line.strip_prefix("id:") {
                        id = v.trim().to_owned();
                    } else if let Some(v) = line.strip_prefix("data:") {
                        data.push_str(v.trim_start());
                    }
                }
                if event.is_empty() && data.is_empty() {
                    // keep-alive comment
                    continue;
                }
                return Some((event, id, data));
            }
            let chunk = self.stream.next().await?.ok()?;
            self.buffer.push_str(&String::from_utf8_lossy(&chunk));
        }
    }

    async fn delta(&mut self) -> Delta {
        let (event, id, data) = tokio::time::timeout(Duration::from_secs(5), self.next_message())
            .await
            .expect("no event within 5s")
            .expect("stream closed");
        assert_eq!(event, "delta");
        let delta: Delta = serde_json::from_str(&data).unwrap();
        assert_eq!(id, delta.version.to_string());
        delta
    }

    async fn assert_quiet(&mut self) {
        let next = tokio::time::timeout(Duration::from_millis(300), self.next_message()).await;
        assert!(next.is_err(), "unexpected event {next:?}");
    }
}

#[tokio::test]
async fn health_and_project() {
    let server = Server::start(fixture("mood.xml")).await;
    let health: serde_json::Value = server.client.get(server.url("/health")).send().await.unwrap().json().await.unwrap();
    assert_eq!(health, json!({ "status": "ok" }));

    let view: ProjectView = server.client.get(server.url("/project")).send().await.unwrap().json().await.unwrap();
    assert_eq!(view.api_version, 1);
    assert_eq!(view.title, "How are you doing");
    assert_eq!(view.nodes.len(), 7);
    assert_eq!(view.edges.len(), 8);
    assert_eq!(view.starts, vec!["greeting"]);
    let class = |id: &str| {
        let n = view.nodes.iter().find(|n| n.id == id).unwrap();
        (n.color_class.clone(), n.intensity)
    };
    // mean of general 0, confidence 0, mood 1
    assert_eq!(class("well"), ("positive".into(), 1.0 / 3.0));
    assert_eq!(class("lost"), ("negative".into(), 1.0 / 3.0));
    assert_eq!(class("hello"), ("neutral".into(), 0.0));
    let start = view.nodes.iter().find(|n| n.id == "start").unwrap();
    assert_eq!(start.position.as_ref().map(|p| (p.x, p.y)), Some((0.0, 0.0)));
}

#[tokio::test]
async fn empty_project_has_empty_arrays() {
    let server = Server::start(Arc::new(Project::builder().build())).await;
    let raw: serde_json::Value = server.client.get(server.url("/project")).send().await.unwrap().json().await.unwrap();
    for key in ["nodes", "edges", "actors", "starts"] {
        assert_eq!(raw[key], json!([]), "{key}");
    }
    assert_eq!(raw["states"], json!({ "player": [], "npc": [] }));
}

#[tokio::test]
async fn create_session_waits_for_first_choice() {
    let server = Server::start(fixture("mood.xml")).await;
    let created = server.create("greeting").await;
    let snap = &created.snapshot;
    assert_eq!(snap.session_id, created.session_id);
    assert_eq!(snap.version, 0);
    assert_eq!(snap.live.phase, "awaiting-choice");
    assert_eq!(snap.live.current_node, "hello");
    let menu: Vec<_> = snap.live.menu.iter().map(|m| (m.node_id.as_str(), m.label.as_str())).collect();
    assert_eq!(menu, vec![("ask", "Ask how she is"), ("bye", "Never mind.")]);
    assert_eq!(snap.transcript.len(), 2);
    assert_eq!(snap.live.player_states[0].value, 0.4);
    assert_eq!(snap.live.conversant.as_ref().unwrap().id, "amy");
}

#[tokio::test]
async fn unknown_start_and_session_are_404() {
    let server = Server::start(fixture("mood.xml")).await;
    let res = server.post("/sessions", json!({ "startName": "nope" })).await;
    assert_eq!(res.status(), StatusCode::NOT_FOUND);
    let body: ErrorBody = res.json().await.unwrap();
    assert!(body.error.contains("nope"), "{}", body.error);

    for path in ["/sessions/missing", "/sessions/missing/events"] {
        let res = server.client.get(server.url(path)).send().await.unwrap();
        assert_eq!(res.status(), StatusCode::NOT_FOUND, "{path}");
    }
    assert_eq!(server.choose("missing", "ask").await.status(), StatusCode::NOT_FOUND);
    let res = server.client.delete(server.url("/sessions/missing")).send().await.unwrap();
    assert_eq!(res.status(), StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn bad_policy_is_400() {
    let server = Server::start(fixture("mood.xml")).await;
    let res = server.post("/sessions", json!({ "startName": "greeting", "policy": "dice" })).await;
    assert_eq!(res.status(), StatusCode::BAD_REQUEST);
    let res = server
        .post("/sessions", json!({ "startName": "greeting", "policy": "softmax", "temperature": 0 }))
        .await;
    assert_eq!(res.status(), StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn sessions_are_independent() {
    let server = Server::start(fixture("mood.xml")).await;
    let a = server.create("greeting").await.session_id;
    let b = server.create("greeting").await.session_id;
    assert_ne!(a, b);
    assert_eq!(server.choose(&a, "bye").await.status(), StatusCode::OK);
    assert_eq!(server.snapshot(&a).await.live.phase, "ended");
    let other = server.snapshot(&b).await;
    assert_eq!(other.live.phase, "awaiting-choice");
    assert_eq!(other.version, 0);

    let res = server.client.delete(server.url(&format!("/sessions/{a}"))).send().await.unwrap();
    assert_eq!(res.status(), StatusCode::NO_CONTENT);
    assert_eq!(server.snapshot(&b).await.version, 0);
    let res = server.client.get(server.url(&format!("/sessions/{a}"))).send().await.unwrap();
    assert_eq!(res.status(), StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn choose_advances_to_ending() {
    let server = Server::start(fixture("mood.xml")).await;
    let id = server.create("greeting").await.session_id;
    let res = server.choose(&id, "ask").await;
    assert_eq!(res.status(), StatusCode::OK);
    let snap: Snapshot = res.json().await.unwrap();
    assert_eq!(snap.version, 1);
    assert_eq!(snap.live.phase, "ended");
    assert_eq!(snap.live.ending.as_ref().unwrap().direction, "scene over");
    assert!(snap.live.menu.is_empty());
    let nodes: Vec<_> = snap.transcript.iter().map(|e| e.node_id.as_str()).collect();
    assert_eq!(nodes, vec!["start", "hello", "ask", "well", "end"]);

    let res = server.choose(&id, "ask").await;
    assert_eq!(res.status(), StatusCode::CONFLICT);
    assert_eq!(server.snapshot(&id).await, snap);
}

#[tokio::test]
async fn invalid_choice_changes_nothing() {
    let server = Server::start(fixture("mood.xml")).await;
    let created = server.create("greeting").await;
    let id = &created.session_id;
    for node in ["well", "nowhere", ""] {
        let res = server.choose(id, node).await;
        assert!(res.status().is_client_error(), "{node}: {}", res.status());
        let body: ErrorBody = res.json().await.unwrap();
        assert!(!body.error.is_empty());
    }
    let res = server.post(&format!("/sessions/{id}/choose"), json!({ "wrong": 1 })).await;
    assert!(res.status().is_client_error());
    assert_eq!(server.snapshot(id).await, created.snapshot);
}

#[tokio::test]
async fn state_edits_steer_the_reply() {
    let server = Server::start(fixture("mood.xml")).await;
    let id = server.create("greeting").await.session_id;
    let res = server
        .post(&format!("/sessions/{id}/state"), json!({ "scope": "npc", "name": "mood", "value": -0.5 }))
        .await;
    assert_eq!(res.status(), StatusCode::OK);
    let snap: Snapshot = res.json().await.unwrap();
    assert_eq!(snap.live.npc_states["amy"][0].value, -0.5);
    let snap: Snapshot = server.choose(&id, "ask").await.json().await.unwrap();
    assert_eq!(snap.transcript[3].node_id, "lost");

    let id = server.create("greeting").await.session_id;
    let snap: Snapshot = server
        .post(&format!("/sessions/{id}/state"), json!({ "scope": "npc", "actor": "amy", "name": "mood", "value": 0.5 }))
        .await
        .json()
        .await
        .unwrap();
    assert_eq!(snap.live.conversant.unwrap().states[0].value, 0.5);
    let snap: Snapshot = server.choose(&id, "ask").await.json().await.unwrap();
    assert_eq!(snap.transcript[3].node_id, "well");
}

#[tokio::test]
async fn state_values_are_clamped_and_checked() {
    let server = Server::start(fixture("mood.xml")).await;
    let id = server.create("greeting").await.session_id;
    let path = format!("/sessions/{id}/state");
    let snap: Snapshot = server
        .post(&path, json!({ "scope": "player", "name": "confidence", "value": 7 }))
        .await
        .json()
        .await
        .unwrap();
    assert_eq!(snap.live.player_states[0].value, 1.0);
    assert_eq!(snap.version, 1);

    let bad = [
        json!({ "scope": "player", "name": "courage", "value": 0.1 }),
        json!({ "scope": "npc", "actor": "ghost", "name": "mood", "value": 0.1 }),
        json!({ "scope": "team", "name": "mood", "value": 0.1 }),
        json!({ "scope": "player", "actor": "amy", "name": "confidence", "value": 0.1 }),
    ];
    for body in bad {
        let res = server.post(&path, body.clone()).await;
        assert!(res.status().is_client_error(), "{body}");
    }
    assert_eq!(server.snapshot(&id).await.version, 1);
}

#[tokio::test]
async fn one_delta_per_mutation() {
    let server = Server::start(fixture("date.xml")).await;
    let created = server.create("date").await;
    let id = created.session_id;
    let mut events = Events::open(&server, &id).await;

    let menu = &created.snapshot.live.menu;
    let snap: Snapshot = server.choose(&id, &menu[0].node_id).await.json().await.unwrap();
    let delta = events.delta().await;
    assert_eq!(delta.session_id, id);
    assert_eq!(delta.version, 1);
    assert_eq!(delta.cause, "choose");
    assert_eq!(delta.live, snap.live);
    assert_eq!(delta.transcript_length, snap.transcript.len());
    let before = created.snapshot.transcript.len();
    assert_eq!(delta.new_entries, snap.transcript[before..].to_vec());
    events.assert_quiet().await;

    // rejected requests publish nothing
    assert!(server.choose(&id, "nowhere").await.status().is_client_error());
    events.assert_quiet().await;

    server
        .post(&format!("/sessions/{id}/state"), json!({ "scope": "player", "name": "confidence", "value": 0.2 }))
        .await;
    let delta = events.delta().await;
    assert_eq!((delta.version, delta.cause.as_str()), (2, "state"));
    assert!(delta.new_entries.is_empty());
    events.assert_quiet().await;
}

#[tokio::test]
async fn reconnect_does_not_replay() {
    let server = Server::start(fixture("date.xml")).await;
    let created = server.create("date").await;
    let id = created.session_id;
    {
        let mut first = Events::open(&server, &id).await;
        server.choose(&id, &created.snapshot.live.menu[0].node_id).await;
        assert_eq!(first.delta().await.version, 1);
    }
    // dropping the stream leaves the session alive
    let snap = server.snapshot(&id).await;
    assert_eq!(snap.version, 1);

    let mut second = Events::open(&server, &id).await;
    second.assert_quiet().await;
    server.choose(&id, &snap.live.menu[0].node_id).await;
    assert_eq!(second.delta().await.version, 2);
}

#[tokio::test]
async fn two_listeners_see_the_same_deltas() {
    let server = Server::start(fixture("mood.xml")).await;
    let id = server.create("greeting").await.session_id;
    let mut a = Events::open(&server, &id).await;
    let mut b = Events::open(&server, &id).await;
    server.choose(&id, "bye").await;
    assert_eq!(a.delta().await, b.delta().await);
}

/// The transcript built through the HTTP API equals an offline replay of the
/// same choices and edits.
#[tokio::test]
async fn facade_matches_replay() {
    let project = fixture("date.xml");
    let server = Server::start(Arc::clone(&project)).await;
    let created = server.create("date").await;
    let id = created.session_id;
    let mut menu = created.snapshot.live.menu;
    let mut picked = Vec::new();
    for step in 0..3 {
        if step == 1 {
            let res = server
                .post(
                    &format!("/sessions/{id}/state"),
                    json!({ "scope": "npc", "actor": "emilia", "name": "interest", "value": 0.8 }),
                )
                .await;
            assert_eq!(res.status(), StatusCode::OK);
        }
        let node = menu.last().unwrap().node_id.clone();
        let snap: Snapshot = server.choose(&id, &node).await.json().await.unwrap();
        picked.push(Choice::Node(node.as_str().into()));
        menu = snap.live.menu;
    }
    let served = server.snapshot(&id).await.transcript;
    let edits = [TimedEdit {
        before_choice: 1,
        edit: StateEdit::new(StateTarget::Npc("emilia".into()), "interest", 0.8),
    }];
    let offline = replay(project, "date", &picked, &edits, SessionOptions::default()).unwrap();
    let offline: Vec<EntryView> = offline.iter().map(EntryView::from).collect();
    assert_eq!(serde_json::to_value(&served).unwrap(), serde_json::to_value(&offline).unwrap());
}
