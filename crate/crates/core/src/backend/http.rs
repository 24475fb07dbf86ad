//! Client for the detection/segmentation sidecar (see [`super::wire`]).

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;
use ureq::Agent;

use super::wire::{
    decode_mask, encode_png_base64, DetectRequest, DetectResponse, HealthResponse, SegmentRequest,
    SegmentResponse,
};
use super::{
    sort_detections, BBox, Detection, GroundingBackend, MaskImage, QuerySpec, ViewContext,
};
use crate::error::{Error, Result};

const MAX_RESPONSE_BYTES: u64 = 256 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct HttpConfig {
    /// Base URL such as `http://127.0.0.1:8731`.
    pub base_url: String,
    pub timeout: Duration,
    pub max_in_flight: usize,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:8731".into(),
            timeout: Duration::from_secs(60),
            max_in_flight: 4,
        }
    }
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
struct Permits {
    free: Mutex<usize>,
    released: Condvar,
}

impl Permits {
    fn acquire(&self) -> PermitGuard<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.released.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        PermitGuard(self)
    }
}

struct PermitGuard<'a>(&'a Permits);

impl Drop for PermitGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.released.notify_one();
    }
}

#[derive(Debug)]
pub struct HttpBackend {
    config: HttpConfig,
    agent: Agent,
    permits: Permits,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self> {
        if config.max_in_flight == 0 {
            return Err(Error::Config("max_in_flight must be at least 1".into()));
        }
        let agent: Agent = Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            permits: Permits {
                free: Mutex::new(config.max_in_flight),
                released: Condvar::new(),
            },
            config,
            agent,
        })
    }

    fn url(&self, route: &str) -> String {
        format!("{}/{}", self.config.base_url.trim_end_matches('/'), route)
    }

    fn read_json<T: DeserializeOwned>(
        route: &str,
        mut resp: ureq::http::Response<ureq::Body>,
    ) -> Result<T> {
        let status = resp.status();
        let text = resp
            .body_mut()
            .with_config()
            .limit(MAX_RESPONSE_BYTES)
            .read_to_string()
            .map_err(|e| Error::BackendUnavailable(format!("{route}: {e}")))?;
        if !status.is_success() {
            return Err(Error::BackendUnavailable(format!(
                "{route} returned {status}: {}",
                text.chars().take(200).collect::<String>()
            )));
        }
        serde_json::from_str(&text)
            .map_err(|e| Error::BackendUnavailable(format!("{route}: malformed response: {e}")))
    }

    fn post<B: Serialize, T: DeserializeOwned>(&self, route: &str, body: &B) -> Result<T> {
        let payload = serde_json::to_string(body).expect("request bodies serialize");
        let _permit = self.permits.acquire();
        let resp = self
            .agent
            .post(&self.url(route))
            .header("content-type", "application/json")
            .send(payload)
            .map_err(|e| Error::BackendUnavailable(format!("{}: {e}", self.url(route))))?;
        Self::read_json(route, resp)
    }

    pub fn health(&self) -> Result<HealthResponse> {
        let _permit = self.permits.acquire();
        let resp = self
            .agent
            .get(&self.url("health"))
            .call()
            .map_err(|e| Error::BackendUnavailable(format!("{}: {e}", self.url("health"))))?;
        Self::read_json("health", resp)
    }
}

impl GroundingBackend for HttpBackend {
    fn detect(&self, view: &ViewContext<'_>, query: &QuerySpec) -> Result<Vec<Detection>> {
        let request = DetectRequest {
            image: encode_png_base64(&view.render.image)?,
            prompt: query.grounding.clone(),
        };
        let response: DetectResponse = self.post("detect", &request)?;
        let (w, h) = view.render.dims();
        let mut dets = response.detections;
        for d in &dets {
            d.validate(w, h)
                .map_err(|e| Error::BackendUnavailable(format!("detect: {e}")))?;
        }
        sort_detections(&mut dets);
        Ok(dets)
    }

    fn segment(
        &self,
        view: &ViewContext<'_>,
        _query: &QuerySpec,
        bbox: &BBox,
    ) -> Result<MaskImage> {
        let (w, h) = view.render.dims();
        bbox.validate(w, h)?;
        let request = SegmentRequest {
            image: encode_png_base64(&view.render.image)?,
            bbox: (*bbox).into(),
        };
        let response: SegmentResponse = self.post("segment", &request)?;
        let mask = decode_mask(&response.mask)
            .map_err(|e| Error::BackendUnavailable(format!("segment: {e}")))?;
        if mask.dims() != (w, h) {
            return Err(Error::DimensionMismatch {
                expected: (w, h),
                actual: mask.dims(),
            });
        }
        Ok(mask)
    }
}
