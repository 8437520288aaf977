//! A crop localizer backed by an external process speaking line-delimited
//! JSON: each request is `{"crop_path": "..."}` and each response is
//! `{"points": [{"u": .., "v": .., "confidence": ..}]}`. A response of
//! `{"error": "..."}` marks that crop as failed.

use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use curbscape_core::localize::{CropLocalizer, CropPoint};
use curbscape_core::projection::CropImage;
use serde::{Deserialize, Serialize};

use crate::imageio;

#[derive(Serialize)]
struct Request<'a> {
    crop_path: &'a str,
}

#[derive(Deserialize)]
struct Response {
    #[serde(default)]
    points: Vec<CropPoint>,
    #[serde(default)]
    error: Option<String>,
}

struct Channel {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

pub struct ProcessLocalizer {
    channel: Mutex<Channel>,
    scratch: PathBuf,
    counter: AtomicU64,
}

impl ProcessLocalizer {
    /// Starts `program` with `args`. Crops without a file on disk are
    /// written under `scratch` before being sent.
    pub fn spawn(program: &str, args: &[String], scratch: impl Into<PathBuf>) -> std::io::Result<Self> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped");
        let stdout = BufReader::new(child.stdout.take().expect("piped"));
        let scratch = scratch.into();
        std::fs::create_dir_all(&scratch)?;
        Ok(Self {
            channel: Mutex::new(Channel { child, stdin, stdout }),
            scratch,
            counter: AtomicU64::new(0),
        })
    }

    /// Sends one request for an existing crop file.
    pub fn request(&self, crop_path: &str) -> Result<Vec<CropPoint>, String> {
        let mut ch = self.channel.lock().map_err(|_| "localizer channel poisoned".to_string())?;
        let mut line = serde_json::to_string(&Request { crop_path }).map_err(|e| e.to_string())?;
        line.push('\n');
        ch.stdin
            .write_all(line.as_bytes())
            .and_then(|_| ch.stdin.flush())
            .map_err(|e| format!("writing to localizer: {e}"))?;
        let mut reply = String::new();
        let n = ch
            .stdout
            .read_line(&mut reply)
            .map_err(|e| format!("reading from localizer: {e}"))?;
        if n == 0 {
            return Err("localizer closed its output".into());
        }
        let resp: Response = serde_json::from_str(reply.trim()).map_err(|e| format!("bad localizer reply: {e}"))?;
        match resp.error {
            Some(e) => Err(e),
            None => Ok(resp.points),
        }
    }
}

impl CropLocalizer for ProcessLocalizer {
    fn locate(&self, crop: &CropImage) -> Result<Vec<CropPoint>, String> {
        let n = self.counter.fetch_add(1, Ordering::Relaxed);
        let path = self.scratch.join(format!("crop-{n:08}.png"));
        imageio::save_png(&path, &crop.image).map_err(|e| e.to_string())?;
        let out = self.request(&path.to_string_lossy());
        let _ = std::fs::remove_file(&path);
        out
    }
}

impl Drop for ProcessLocalizer {
    fn drop(&mut self) {
        if let Ok(ch) = self.channel.get_mut() {
            let _ = ch.child.kill();
            let _ = ch.child.wait();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use curbscape_core::image::RgbImage;
    use curbscape_core::projection::CropSpec;

    const SCRIPT: &str = r#"
import json, sys
for line in sys.stdin:
    req = json.loads(line)
    if req["crop_path"].endswith("bad"):
        print(json.dumps({"error": "cannot read"}), flush=True)
    else:
        print(json.dumps({"points": [{"u": 170.5, "v": 600.0, "confidence": 0.8}]}), flush=True)
"#;

    fn python() -> Option<&'static str> {
        ["python3", "python"]
            .into_iter()
            .find(|p| Command::new(p).arg("--version").output().is_ok())
    }

    #[test]
    fn round_trips_through_a_child_process() {
        let Some(py) = python() else {
            eprintln!("python not available; skipping");
            return;
        };
        let dir = tempfile::tempdir().unwrap();
        let loc = ProcessLocalizer::spawn(py, &["-c".into(), SCRIPT.into()], dir.path()).unwrap();
        let spec = CropSpec::toward(0.0);
        let crop = CropImage {
            image: RgbImage::filled(spec.band_width(), spec.square_px, [0; 3]),
            spec,
            pano_id: "P".into(),
        };
        let pts = curbscape_core::localize::localize(&loc, &crop).unwrap();
        assert_eq!(pts, vec![CropPoint { u: 170.5, v: 600.0, confidence: 0.8 }]);
        assert_eq!(loc.request("x.bad"), Err("cannot read".into()));
    }
}
