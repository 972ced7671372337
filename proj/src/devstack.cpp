// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The evalbench Authors

#include "evalbench/devstack.hpp"

#include "evalbench/error.hpp"

namespace evalbench {

std::string dev_model_manifest_text() {
    return R"(name: MLPerf_ResNet50_v1.5
version: 1.0.0
description: ResNet-50 v1.5 image classifier served by the synthetic backend
framework:
  name: TensorFlow
  version: '>=1.12.0 <2.0'
inputs:
  - type: image
    layer_name: input_tensor
    element_type: float32
    steps:
      - decode:
          data_layout: NHWC
          color_mode: RGB
      - resize:
          dimensions: [3, 224, 224]
          method: bilinear
          keep_aspect_ratio: true
      - normalize:
          mean: [123.68, 116.78, 103.94]
          rescale: 1.0
outputs:
  - type: probability
    layer_name: prob
    element_type: float32
    steps:
      - argsort: {}
model:
  base_url: file:///nonexistent/
  graph_path: resnet50_v1.pb
attributes:
  task: image_classification
  training_dataset: ImageNet
)";
}

DevStack::DevStack(DevStackOptions options) : options_(std::move(options)) {
    if (options_.evaldb_dir.empty()) throw Error(Errc::validation, "dev stack needs a result directory", "evaldb_dir");
}

DevStack::~DevStack() { stop(); }

void DevStack::start() {
    if (started_) return;
    const net::Endpoint any{options_.host, 0};
    registry_service_ = std::make_unique<RegistryService>(std::make_shared<Registry>(), any);
    registry_service_->start();
    tracer_service_ = std::make_unique<TracerService>(std::make_shared<TraceStore>(), any);
    tracer_service_->start();
    registry().publish_model(parse_model_manifest(dev_model_manifest_text()));

    ServerConfig sc;
    sc.listen = net::Endpoint{options_.host, options_.server_port};
    sc.registry = registry_endpoint();
    sc.tracer = tracer_endpoint();
    sc.evaldb_dir = options_.evaldb_dir;
    server_ = std::make_unique<Server>(sc);
    server_->start();
    started_ = true;
    for (std::size_t i = 0; i < options_.agents; ++i) add_agent();
}

Agent& DevStack::add_agent() {
    if (!started_) throw Error(Errc::internal, "dev stack is not running");
    AgentConfig c;
    c.agent_id = "dev-agent-" + std::to_string(agents_.size() + 1);
    c.listen = net::Endpoint{options_.host, 0};
    c.registry = registry_endpoint();
    c.tracer = tracer_endpoint();
    c.cache_root = options_.evaldb_dir / "cache";
    c.predictors.push_back(PredictorConfig{"synthetic", "TensorFlow", SemVer{1, 13, 1}, options_.predictor_options});
    c.builtin_models.push_back(parse_model_manifest(dev_model_manifest_text()));
    auto agent = std::make_unique<Agent>(std::move(c));
    agent->start();
    if (!agent->wait_registered(std::chrono::seconds(10))) {
        throw Error(Errc::transport, "dev agent did not register");
    }
    agents_.push_back(std::move(agent));
    return *agents_.back();
}

std::unique_ptr<Server> DevStack::make_server() const {
    ServerConfig sc;
    sc.listen = net::Endpoint{options_.host, 0};
    sc.registry = registry_endpoint();
    sc.tracer = tracer_endpoint();
    sc.evaldb_dir = options_.evaldb_dir;
    auto s = std::make_unique<Server>(sc);
    s->start();
    return s;
}

void DevStack::stop() {
    if (!started_) return;
    started_ = false;
    if (server_) server_->stop();
    for (auto& a : agents_) a->stop();
    agents_.clear();
    if (tracer_service_) tracer_service_->stop();
    if (registry_service_) registry_service_->stop();
}

} // namespace evalbench
