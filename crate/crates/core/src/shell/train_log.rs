use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::learn::UpdateLog;

pub const TRAIN_LOG_HEADER: &str =
    "update_idx,env_steps,mean_reward_g0,entropy,value_loss,grad_norm";

pub fn training_log_csv(log: &[UpdateLog]) -> String {
    let mut out = String::with_capacity(64 * (log.len() + 1));
    out.push_str(TRAIN_LOG_HEADER);
    out.push('\n');
    for r in log {
        out.push_str(&format!(
            "{},{},{:.9},{:.9},{:.9},{:.9}\n",
            r.update_idx, r.env_steps, r.mean_reward_g0, r.entropy, r.value_loss, r.grad_norm
        ));
    }
    out
}

pub fn write_training_log(log: &[UpdateLog], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(training_log_csv(log).as_bytes())
        .map_err(|e| Error::io(path, e))
}
