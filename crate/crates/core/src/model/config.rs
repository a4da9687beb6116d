use serde::{Deserialize, Serialize};

/// Architecture hyperparameters.
///
/// Feature width per node after the extractor (the shape calculus), with
/// `L'` the conv output length and pooling windows non-overlapping:
///
/// ```text
/// L1' = (T  + 2p - k1) / s + 1        L1 = (L1' - w) / w + 1
/// L2' = (L1 + 2p - k2) / s + 1        L2 = (L2' - w) / w + 1
/// F0  = c2 * L2
/// ```
///
/// With the defaults (`k = [5, 3]`, `s = 1`, `p = 0`, `w = 2`, `c = [16, 32]`)
/// and a 125-sample window: `L1' = 121`, `L1 = 60`, `L2' = 58`, `L2 = 29`,
/// so `F0 = 32 * 29 = 928`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub conv_channels: [usize; 2],
    pub kernel_widths: [usize; 2],
    pub conv_stride: usize,
    pub conv_padding: usize,
    pub pool_window: usize,
    pub gcn_widths: [usize; 2],
    /// Hidden width of both heads; defaults to the pooled width.
    pub head_hidden: Option<usize>,
    pub bn_momentum: f64,
    pub bn_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            conv_channels: [16, 32],
            kernel_widths: [5, 3],
            conv_stride: 1,
            conv_padding: 0,
            pool_window: 2,
            gcn_widths: [64, 64],
            head_hidden: None,
            bn_momentum: 0.1,
            bn_eps: 1e-5,
        }
    }
}

/// Data-dependent sizes fixed when a model is built.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub nodes: usize,
    pub channels: usize,
    pub length: usize,
    pub classes: usize,
    pub domains: usize,
}

impl ModelConfig {
    fn conv_len(&self, len: usize, width: usize) -> Option<usize> {
        let padded = len + 2 * self.conv_padding;
        (padded >= width && self.conv_stride > 0).then(|| (padded - width) / self.conv_stride + 1)
    }

    fn pool_len(&self, len: usize) -> Option<usize> {
        (self.pool_window > 0 && len >= self.pool_window)
            .then(|| (len - self.pool_window) / self.pool_window + 1)
    }

    /// Time lengths after each conv block, or `None` if a window does not fit.
    pub fn block_lengths(&self, length: usize) -> Option<[usize; 2]> {
        let l1 = self.pool_len(self.conv_len(length, self.kernel_widths[0])?)?;
        let l2 = self.pool_len(self.conv_len(l1, self.kernel_widths[1])?)?;
        Some([l1, l2])
    }

    /// Per-node feature width `F0` produced by the extractor.
    pub fn feature_width(&self, length: usize) -> Option<usize> {
        self.block_lengths(length)
            .map(|[_, l2]| self.conv_channels[1] * l2)
    }

    pub fn pooled_width(&self) -> usize {
        self.gcn_widths[1]
    }

    pub fn head_width(&self) -> usize {
        self.head_hidden.unwrap_or(self.pooled_width())
    }

    pub fn validate(&self, dims: &ModelDims) -> Result<(), String> {
        if self.conv_channels.contains(&0) || self.gcn_widths.contains(&0) || self.head_width() == 0 {
            return Err("layer widths must be positive".into());
        }
        if self.kernel_widths.contains(&0) || self.conv_stride == 0 || self.pool_window == 0 {
            return Err("kernel widths, stride and pool window must be positive".into());
        }
        if !(self.bn_momentum > 0.0 && self.bn_momentum <= 1.0) || !(self.bn_eps > 0.0) {
            return Err("batch-norm momentum must be in (0, 1] and eps positive".into());
        }
        if dims.nodes == 0 || dims.channels == 0 || dims.classes < 2 || dims.domains == 0 {
            return Err(format!("invalid model dimensions {dims:?}"));
        }
        if self.feature_width(dims.length).is_none() {
            return Err(format!(
                "window length {} too short for kernels {:?} and pool {}",
                dims.length, self.kernel_widths, self.pool_window
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_shape_calculus_for_125_samples() {
        let c = ModelConfig::default();
        assert_eq!(c.block_lengths(125), Some([60, 29]));
        assert_eq!(c.feature_width(125), Some(928));
    }

    #[test]
    fn too_short_windows_are_rejected() {
        let c = ModelConfig::default();
        assert_eq!(c.feature_width(4), None);
        let dims = ModelDims {
            nodes: 5,
            channels: 9,
            length: 4,
            classes: 2,
            domains: 3,
        };
        assert!(c.validate(&dims).is_err());
    }
}
