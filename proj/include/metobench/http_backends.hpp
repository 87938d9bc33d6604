#pragma once

// HTTP JSON backends following the common open inference conventions:
//
//   text, multimodal   POST chat-completions   {model, messages, temperature, top_p, ...}
//                      -> choices[0].message.content
//   text_embed         POST embeddings         {model, input: [str]} -> data[i].embedding
//   image_embed        POST embeddings         {model, input: [{image: b64}] | [{text: str}]}
//                      -> data[0].embedding
//   image              POST render             {model, prompt, params} -> {image: b64}
//                                              (or OpenAI-style data[0].b64_json)
//
// The credential is read from the environment variable named by
// BackendConfig::auth_env on every request and sent as a bearer token.

#include "metobench/gateway.hpp"

#include <memory>

namespace metobench {

std::shared_ptr<TextBackend> make_http_text_backend(const BackendConfig& cfg);
std::shared_ptr<ImageBackend> make_http_image_backend(const BackendConfig& cfg);
std::shared_ptr<TextEmbedBackend> make_http_text_embed_backend(const BackendConfig& cfg);
std::shared_ptr<ImageEmbedBackend> make_http_image_embed_backend(const BackendConfig& cfg);
std::shared_ptr<MultimodalBackend> make_http_multimodal_backend(const BackendConfig& cfg);

struct ParsedUrl {
  std::string scheme_host_port;  // e.g. "http://localhost:8000"
  std::string path;              // e.g. "/v1/chat/completions"
};

// Throws ConfigError on anything that is not http(s)://host[:port][/path].
ParsedUrl parse_url(const std::string& url);

}  // namespace metobench
