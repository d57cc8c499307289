//! Start the service in-process and follow one session's event stream.
//!
//!     cargo run -p flowforge-service --example sse_client -- "When a problem is created, log a message."

use std::io::{BufRead, BufReader};

use flowforge_service::{router, AppState, ServiceConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let requirement = std::env::args().nth(1).unwrap_or_else(|| {
        "When a P1 incident is created, look up the user assigned to the incident. \
         If the user has a manager, send an email to the manager reminding them of the incident."
            .to_owned()
    });
    let config = ServiceConfig {
        index_dir: std::env::temp_dir().join("flowforge-index"),
        ..Default::default()
    };
    let state = AppState::new(config)?;

    let rt = tokio::runtime::Runtime::new()?;
    let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))?;
    let base = format!("http://{}", listener.local_addr()?);
    rt.spawn(async move { axum::serve(listener, router(state)).await });

    let created: serde_json::Value = ureq::post(&format!("{base}/v1/sessions"))
        .send_json(serde_json::json!({ "requirement": requirement, "auto_continue": true }))?
        .into_json()?;
    let id = created["session_id"].as_str().ok_or("no session id")?;
    println!("session {id}");

    // The stream closes after the terminal event.
    let stream = ureq::get(&format!("{base}/v1/sessions/{id}/events"))
        .call()?
        .into_reader();
    for line in BufReader::new(stream).lines() {
        let line = line?;
        if let Some(name) = line.strip_prefix("event:") {
            print!("{:<16}", name.trim());
        } else if let Some(data) = line.strip_prefix("data:") {
            let event: serde_json::Value = serde_json::from_str(data.trim())?;
            let detail = event
                .get("name")
                .or_else(|| event.get("outline"))
                .or_else(|| event.get("choices").and_then(|c| c.get("query")))
                .map(|v| {
                    v.as_str()
                        .unwrap_or_default()
                        .lines()
                        .next()
                        .unwrap_or_default()
                        .to_owned()
                })
                .unwrap_or_default();
            println!("#{} {detail}", event["seq"]);
        }
    }
    let view: serde_json::Value = ureq::get(&format!("{base}/v1/sessions/{id}")).call()?.into_json()?;
    print!("\n{}", view["workflow"].as_str().unwrap_or_default());
    Ok(())
}
