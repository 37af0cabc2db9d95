//! Minimal HTTP client for the CLI and tests.

use serde::Deserialize;
use serde_json::Value;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("request failed: {0}")]
    Http(#[from] reqwest::Error),
    #[error("server answered {status}: {body}")]
    Status { status: u16, body: String },
}

#[derive(Debug, Clone, Deserialize)]
pub struct SeriesData {
    pub point_id: u32,
    pub param: String,
    pub resolution: String,
    pub from: u64,
    pub to: u64,
    pub values: Vec<(u64, f64, u8)>,
}

pub struct ApiClient {
    base: String,
    token: String,
    http: reqwest::Client,
}

impl ApiClient {
    pub fn new(base: impl Into<String>, token: impl Into<String>) -> Self {
        let mut base = base.into();
        if !base.starts_with("http://") && !base.starts_with("https://") {
            base = format!("http://{base}");
        }
        ApiClient {
            base: base.trim_end_matches('/').to_string(),
            token: token.into(),
            http: reqwest::Client::new(),
        }
    }

    async fn send(&self, req: reqwest::RequestBuilder) -> Result<reqwest::Response, ClientError> {
        let resp = req.bearer_auth(&self.token).send().await?;
        if !resp.status().is_success() {
            return Err(ClientError::Status {
                status: resp.status().as_u16(),
                body: resp.text().await.unwrap_or_default(),
            });
        }
        Ok(resp)
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    pub async fn series(
        &self,
        point: u32,
        param: &str,
        res: &str,
        from: &str,
        to: &str,
    ) -> Result<SeriesData, ClientError> {
        let point = point.to_string();
        let q = [("point", point.as_str()), ("param", param), ("res", res), ("from", from), ("to", to)];
        Ok(self.send(self.http.get(self.url("/api/v1/series")).query(&q)).await?.json().await?)
    }

    pub async fn export(&self, point: u32, res: &str, from: &str, to: &str) -> Result<String, ClientError> {
        let point = point.to_string();
        let q = [("point", point.as_str()), ("res", res), ("from", from), ("to", to)];
        Ok(self.send(self.http.get(self.url("/api/v1/export")).query(&q)).await?.text().await?)
    }

    pub async fn status(&self) -> Result<Value, ClientError> {
        Ok(self.send(self.http.get(self.url("/api/v1/status"))).await?.json().await?)
    }

    pub async fn demote(&self, cutoff: &str) -> Result<Value, ClientError> {
        let q = [("cutoff", cutoff)];
        Ok(self.send(self.http.post(self.url("/api/v1/admin/demote")).query(&q)).await?.json().await?)
    }

    pub async fn import_csv(&self, res: &str, body: Vec<u8>) -> Result<Value, ClientError> {
        let q = [("res", res)];
        let req = self.http.post(self.url("/api/v1/import/bulk")).query(&q).body(body);
        Ok(self.send(req).await?.json().await?)
    }
}
