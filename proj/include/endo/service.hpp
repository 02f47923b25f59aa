#pragma once

#include <memory>

#include "endo/config.hpp"
#include "endo/unet.hpp"

namespace endo {

/// HTTP front end of the annotation engine. JSON API under /api/v1 (see
/// docs/api.md), static files from config.paths.web at /. Sessions are
/// persisted under <output>/sessions and restored on start.
///
/// Edits to one session are serialized; different sessions proceed in
/// parallel. Inference runs on at most service.workers requests at a time,
/// with a short queue beyond that answered by 503.
class Service {
public:
    /// model may be null; assist requests then fail with 503.
    Service(const PipelineConfig& config, std::shared_ptr<const UNet<float>> model);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Binds config.service.host:port (port 0 picks a free one) and returns the
    /// bound port. Throws Error(Io) when the port is busy.
    int bind();
    /// Serves until stop(). Calls bind() first if needed.
    void listen();
    void stop();
    std::size_t session_count() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace endo
