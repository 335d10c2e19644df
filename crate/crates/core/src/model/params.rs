use super::ModelConfig;

/// Trainable parameters in one encoder or decoder layer: four attention
/// projections, the two feed-forward linears and two layer norms.
pub fn layer_parameters(cfg: &ModelConfig) -> u64 {
    let d = cfg.width() as u64;
    let f = cfg.feedforward_dim as u64;
    let attention = 4 * (d * d + d);
    let feed_forward = (d * f + f) + (f * d + d);
    let norms = 2 * (2 * d);
    attention + feed_forward + norms
}

/// Exact trainable-parameter count, from shapes alone.
pub fn count_parameters(cfg: &ModelConfig) -> u64 {
    let d = cfg.width() as u64;
    let layers = (cfg.encoder_layers + cfg.decoder_layers) as u64 * layer_parameters(cfg);
    let positions = cfg.max_frames as u64 * d;
    let class_query = d;
    let final_norms = 2 * (2 * d);
    let head = d * cfg.num_classes as u64 + cfg.num_classes as u64;
    layers + positions + class_query + final_norms + head
}
