//! A token restricted to point p must never yield data for any other point,
//! whatever endpoint is used.

mod common;

use std::sync::OnceLock;

use common::Harness;
use gridmon_core::Resolution;
use gridmon_sim::{Scenario, DEFAULT_START_MS};
use proptest::prelude::*;
use serde_json::Value;
use tokio::runtime::Runtime;

const T0: u64 = DEFAULT_START_MS;

fn env() -> &'static (Runtime, Harness) {
    static ENV: OnceLock<(Runtime, Harness)> = OnceLock::new();
    ENV.get_or_init(|| {
        let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
        let extra: String = (1..=4).map(|p| format!("tok{p}\tREAD,EXPORT,IMPORT\t{p}\n")).collect();
        let h = rt.block_on(async {
            let h = Harness::start_with_tokens(4, &extra).await;
            h.run(&Scenario::uniform(9, 60, 1, 4)).await;
            h
        });
        (rt, h)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn restricted_token_cannot_reach_other_points(p in 1u32..=4, q in 1u32..=6, endpoint in 0usize..4, slot in 0u64..20) {
        let (rt, h) = env();
        let token = format!("tok{p}");
        let range = format!("from={T0}&to={}", T0 + 60_000);
        let before = h.svc.center().store().query_range(q, Resolution::R3S, 0, u64::MAX).map(|r| r.len()).unwrap_or(0);
        let (status, body) = rt.block_on(async {
            match endpoint {
                0 => h.get(&format!("/api/v1/series?point={q}&param=p_w&res=3s&{range}"), Some(&token)).await,
                1 => h.get(&format!("/api/v1/events?point={q}&{range}"), Some(&token)).await,
                2 => h.get(&format!("/api/v1/export?point={q}&res=3s&{range}"), Some(&token)).await,
                _ => {
                    let csv = format!("point_id,timestamp,parameter,value\n{q},{},flicker_pst,0.5\n", T0 + slot * 3000);
                    h.post("/api/v1/import/bulk", Some(&token), &csv).await
                }
            }
        });
        let after = h.svc.center().store().query_range(q, Resolution::R3S, 0, u64::MAX).map(|r| r.len()).unwrap_or(0);
        prop_assert_eq!(before, after);
        if endpoint == 3 {
            prop_assert_eq!(status, 200);
            let v: Value = serde_json::from_str(&body).unwrap();
            if q == p {
                prop_assert_eq!(&v["accepted"], 1);
            } else {
                prop_assert_eq!(&v["accepted"], 0);
                prop_assert_eq!(&v["rejected"][0]["reason"], "FORBIDDEN_POINT");
            }
        } else if q == p {
            prop_assert_eq!(status, 200);
        } else {
            prop_assert_eq!(status, 403, "{}", body);
            let leaked = body.contains(&T0.to_string());
            prop_assert!(!leaked);
        }

        let (_, body) = rt.block_on(h.get("/api/v1/points", Some(&token)));
        let pts: Value = serde_json::from_str(&body).unwrap();
        let ids: Vec<u64> = pts.as_array().unwrap().iter().map(|x| x["point_id"].as_u64().unwrap()).collect();
        prop_assert_eq!(ids, vec![p as u64]);
    }
}
